#include "madis/checkpoint.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace madis {

namespace {

std::string tensor_filename(const std::string& name) {
  std::string f = name;
  for (char& c : f)
    if (c == '.' || c == '/') c = '_';
  return f + ".f32";
}

void write_raw_f32(const std::string& path, const Tensor<float>& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  // Host is little-endian; bytes go out as-is.
  out.write(reinterpret_cast<const char*>(t.data()),
            std::streamsize(t.numel() * sizeof(float)));
  if (!out) throw std::runtime_error("checkpoint: write failed " + path);
}

Tensor<float> read_raw_f32(const std::string& path, std::vector<int> shape) {
  Tensor<float> t(std::move(shape));
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot read " + path);
  in.read(reinterpret_cast<char*>(t.data()), std::streamsize(t.numel() * sizeof(float)));
  if (in.gcount() != std::streamsize(t.numel() * sizeof(float)))
    throw std::runtime_error("checkpoint: truncated " + path);
  return t;
}

}  // namespace

void save_checkpoint(const std::string& dir, const Checkpoint& ckpt) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir + "/manifest.txt");
  if (!manifest) throw std::runtime_error("checkpoint: cannot write manifest in " + dir);
  for (const auto& [name, tensor] : ckpt.tensors) {
    std::string file = tensor_filename(name);
    manifest << name << "\tf32\t";
    const auto& s = tensor.shape();
    for (size_t i = 0; i < s.size(); ++i) manifest << (i ? "," : "") << s[i];
    manifest << "\t" << file << "\n";
    write_raw_f32(dir + "/" + file, tensor);
  }
}

Checkpoint load_checkpoint(const std::string& dir) {
  std::ifstream manifest(dir + "/manifest.txt");
  if (!manifest) throw std::runtime_error("checkpoint: no manifest in " + dir);
  Checkpoint ckpt;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name, dtype, dims, file;
    if (!std::getline(ls, name, '\t') || !std::getline(ls, dtype, '\t') ||
        !std::getline(ls, dims, '\t') || !std::getline(ls, file, '\t'))
      throw std::runtime_error("checkpoint: malformed manifest line: " + line);
    if (dtype != "f32") throw std::runtime_error("checkpoint: unsupported dtype " + dtype);
    std::vector<int> shape;
    std::istringstream ds(dims);
    std::string d;
    while (std::getline(ds, d, ',')) shape.push_back(std::stoi(d));
    ckpt.tensors.emplace(name, read_raw_f32(dir + "/" + file, std::move(shape)));
  }
  return ckpt;
}

void load_into_store(const Checkpoint& ckpt, ParamStore<float>& store,
                     const std::string& prefix) {
  for (const auto& [name, tensor] : ckpt.tensors) {
    if (name.rfind("optim.", 0) == 0) continue;
    if (!prefix.empty() && name.rfind(prefix, 0) != 0) continue;
    if (!store.has(name))
      throw std::runtime_error("checkpoint: unknown parameter name: " + name);
    Var<float>& var = store.get(name);
    if (var->value.shape() != tensor.shape())
      throw std::runtime_error("checkpoint: shape mismatch for " + name + ": file " +
                               shape_str(tensor.shape()) + " vs model " +
                               shape_str(var->value.shape()));
    var->value = tensor;
  }
}

Checkpoint store_to_checkpoint(const ParamStore<float>& store) {
  Checkpoint ckpt;
  store.for_each([&](const std::string& name, const Var<float>& var, bool) {
    ckpt.tensors.emplace(name, var->value);
  });
  return ckpt;
}

}  // namespace madis
