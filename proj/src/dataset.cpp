#include "madis/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

namespace madis {

namespace {

float quantize8(double v) {
  v = std::clamp(v, 0.0, 1.0);
  return float(std::lround(v * 255.0)) / 255.0f;
}

// One disjoint region rasterized into `mask`; returns false if the candidate
// overlaps the existing union.
bool try_place_region(Tensor<float>& mask, double area_fraction, std::mt19937& rng) {
  const int H = mask.dim(1), W = mask.dim(2);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double target = area_fraction * H * W;
  const int kind = int(uni(rng) * 3.0) % 3;

  std::vector<int> cells;
  auto collect = [&](auto&& inside, int x0, int y0, int x1, int y1) {
    for (int y = std::max(0, y0); y <= std::min(H - 1, y1); ++y)
      for (int x = std::max(0, x0); x <= std::min(W - 1, x1); ++x)
        if (inside(x, y)) cells.push_back(y * W + x);
  };

  if (kind == 0) {  // rectangle
    double aspect = 0.5 + 1.5 * uni(rng);
    int w = std::max(2, int(std::lround(std::sqrt(target * aspect))));
    int h = std::max(2, int(std::lround(target / w)));
    w = std::min(w, W - 2);
    h = std::min(h, H - 2);
    int x0 = int(uni(rng) * (W - w)), y0 = int(uni(rng) * (H - h));
    collect([&](int x, int y) { return x >= x0 && x < x0 + w && y >= y0 && y < y0 + h; },
            x0, y0, x0 + w - 1, y0 + h - 1);
  } else if (kind == 1) {  // ellipse
    double aspect = 0.5 + 1.5 * uni(rng);
    double a = std::max(1.5, std::sqrt(target * aspect / M_PI));
    double b = std::max(1.5, target / (M_PI * a));
    double cx = a + uni(rng) * std::max(1.0, W - 2 * a);
    double cy = b + uni(rng) * std::max(1.0, H - 2 * b);
    collect(
        [&](int x, int y) {
          double dx = (x + 0.5 - cx) / a, dy = (y + 0.5 - cy) / b;
          return dx * dx + dy * dy <= 1.0;
        },
        int(cx - a) - 1, int(cy - b) - 1, int(cx + a) + 1, int(cy + b) + 1);
  } else {  // convex star polygon, 3..6 vertices
    int nv = 3 + int(uni(rng) * 4.0) % 4;
    // Radius giving roughly the target area for a regular n-gon.
    double r = std::sqrt(2.0 * target / (nv * std::sin(2.0 * M_PI / nv)));
    r = std::max(2.0, r);
    double cx = r + uni(rng) * std::max(1.0, W - 2 * r);
    double cy = r + uni(rng) * std::max(1.0, H - 2 * r);
    std::vector<double> px(static_cast<size_t>(nv)), py(static_cast<size_t>(nv));
    double phase = uni(rng) * 2.0 * M_PI;
    for (int i = 0; i < nv; ++i) {
      double ang = phase + 2.0 * M_PI * i / nv;
      double ri = r * (0.7 + 0.3 * uni(rng));
      px[size_t(i)] = cx + ri * std::cos(ang);
      py[size_t(i)] = cy + ri * std::sin(ang);
    }
    auto inside = [&](int x, int y) {
      double fx = x + 0.5, fy = y + 0.5;
      bool in = false;
      for (int i = 0, j = nv - 1; i < nv; j = i++) {
        if ((py[size_t(i)] > fy) != (py[size_t(j)] > fy) &&
            fx < (px[size_t(j)] - px[size_t(i)]) * (fy - py[size_t(i)]) /
                         (py[size_t(j)] - py[size_t(i)]) +
                     px[size_t(i)])
          in = !in;
      }
      return in;
    };
    collect(inside, int(cx - r) - 1, int(cy - r) - 1, int(cx + r) + 1, int(cy + r) + 1);
  }

  if (cells.size() < 4) return false;
  for (int c : cells)
    if (mask[c] != 0.0f) return false;  // overlap with an earlier region
  for (int c : cells) mask[c] = 1.0f;
  return true;
}

}  // namespace

JitterDraw sample_jitter(const JitterSpec& spec, std::mt19937& rng) {
  std::uniform_real_distribution<double> gain(spec.gain_lo, spec.gain_hi);
  std::uniform_real_distribution<double> bias(spec.bias_lo, spec.bias_hi);
  std::uniform_real_distribution<double> gamma(spec.gamma_lo, spec.gamma_hi);
  JitterDraw d{};
  for (int c = 0; c < 3; ++c) d.gain[c] = gain(rng);
  for (int c = 0; c < 3; ++c) d.bias[c] = bias(rng);
  d.gamma = gamma(rng);
  return d;
}

Tensor<float> procedural_base(int size, std::mt19937& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  Tensor<float> img({3, size, size});
  for (int c = 0; c < 3; ++c) {
    double c00 = 0.1 + 0.8 * uni(rng), c01 = 0.1 + 0.8 * uni(rng);
    double c10 = 0.1 + 0.8 * uni(rng), c11 = 0.1 + 0.8 * uni(rng);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        double fx = double(x) / (size - 1), fy = double(y) / (size - 1);
        img[(Eigen::Index(c) * size + y) * size + x] =
            float((1 - fy) * ((1 - fx) * c00 + fx * c01) +
                  fy * ((1 - fx) * c10 + fx * c11));
      }
  }
  int blobs = 2 + int(uni(rng) * 4.0) % 4;
  for (int b = 0; b < blobs; ++b) {
    double cx = uni(rng) * size, cy = uni(rng) * size;
    double sigma = size * (0.1 + 0.23 * uni(rng));
    double amp[3];
    for (int c = 0; c < 3; ++c) amp[c] = -0.3 + 0.6 * uni(rng);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        double d2 = ((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (2 * sigma * sigma);
        double g = std::exp(-d2);
        for (int c = 0; c < 3; ++c)
          img[(Eigen::Index(c) * size + y) * size + x] += float(amp[c] * g);
      }
  }
  for (Eigen::Index i = 0; i < img.numel(); ++i)
    img[i] = quantize8(std::clamp(double(img[i]), 0.05, 0.95));
  return img;
}

std::pair<Tensor<float>, Tensor<float>> generate_composite(const Tensor<float>& base,
                                                           const RegionSpec& region,
                                                           const JitterSpec& jitter,
                                                           uint64_t seed) {
  if (base.rank() != 3 || base.dim(0) != 3)
    throw std::runtime_error("generate_composite: [3,H,W] base expected");
  if (base.array().minCoeff() < 0.0f || base.array().maxCoeff() > 1.0f)
    throw std::runtime_error("generate_composite: base outside [0,1]");
  const int H = base.dim(1), W = base.dim(2);
  std::seed_seq sseq{uint32_t(seed), uint32_t(seed >> 32), uint32_t(0x9e3779b9)};
  std::mt19937 rng(sseq);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  const int count =
      region.min_count + int(uni(rng) * (region.max_count - region.min_count + 1)) %
                             (region.max_count - region.min_count + 1);
  std::vector<double> areas(static_cast<size_t>(count));
  double total = 0;
  for (double& a : areas) {
    a = region.min_area_fraction +
        uni(rng) * (region.max_area_fraction - region.min_area_fraction);
    total += a;
  }
  if (total > region.total_area_cap * 0.95)
    for (double& a : areas) a *= region.total_area_cap * 0.95 / total;

  Tensor<float> image = base;
  Tensor<float> mask({1, H, W});
  const Eigen::Index plane = Eigen::Index(H) * W;
  for (double a : areas) {
    Tensor<float> scratch({1, H, W});
    scratch.array() = mask.array();
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      Tensor<float> trial = scratch;
      // Shrink the target if the remaining free space keeps rejecting it.
      double a_try = a * std::pow(0.97, attempt);
      if (try_place_region(trial, a_try, rng)) {
        // Apply region jitter, resampling until the perceptual shift clears
        // the floor — the generator never emits a harmonious pair.
        std::vector<int> cells;
        for (Eigen::Index i = 0; i < plane; ++i)
          if (trial[i] != 0.0f && mask[i] == 0.0f) cells.push_back(int(i));
        for (int jit_try = 0; jit_try < 1000; ++jit_try) {
          JitterDraw d = sample_jitter(jitter, rng);
          double shift = 0;
          std::vector<float> vals(cells.size() * 3);
          for (size_t ci = 0; ci < cells.size(); ++ci)
            for (int c = 0; c < 3; ++c) {
              double v = double(image[Eigen::Index(c) * plane + cells[ci]]);
              double out = quantize8(d.gain[c] * std::pow(v, d.gamma) + d.bias[c]);
              vals[ci * 3 + size_t(c)] = float(out);
              shift += std::abs(out - v);
            }
          if (shift / double(cells.size() * 3) >= jitter.min_shift) {
            for (size_t ci = 0; ci < cells.size(); ++ci)
              for (int c = 0; c < 3; ++c)
                image[Eigen::Index(c) * plane + cells[ci]] = vals[ci * 3 + size_t(c)];
            break;
          }
          if (jit_try == 999)
            throw std::runtime_error("generate_composite: jitter floor unreachable");
        }
        mask = trial;
        placed = true;
      }
    }
    if (!placed)
      throw std::runtime_error("generate_composite: disjoint placement failed after 100 attempts");
  }
  if (double(mask.array().sum()) > region.total_area_cap * plane)
    throw std::runtime_error("generate_composite: area cap exceeded");
  return {std::move(image), std::move(mask)};
}

SampleManifest build_dataset(const DatasetConfig& cfg, uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir + "/train");
  fs::create_directories(cfg.out_dir + "/test");

  std::vector<std::string> base_files;
  if (!cfg.base_image_dir.empty()) {
    for (const auto& e : fs::directory_iterator(cfg.base_image_dir))
      if (e.path().extension() == ".ppm") base_files.push_back(e.path().string());
    std::sort(base_files.begin(), base_files.end());
    if (base_files.empty())
      throw std::runtime_error("build_dataset: no .ppm files in " + cfg.base_image_dir);
  }

  SampleManifest manifest;
  manifest.seed = seed;
  const int total = cfg.train_count + cfg.test_count;
  for (int idx = 0; idx < total; ++idx) {
    std::seed_seq sseq{uint32_t(seed), uint32_t(seed >> 32), uint32_t(idx)};
    std::mt19937 rng(sseq);
    Tensor<float> base;
    if (base_files.empty()) {
      base = procedural_base(cfg.image_size, rng);
    } else {
      ImageU8 img = read_netpbm(base_files[size_t(idx) % base_files.size()]);
      if (img.channels != 3 || img.width != cfg.image_size || img.height != cfg.image_size)
        throw std::runtime_error("build_dataset: base image size/format mismatch");
      base = image_to_tensor(img);
    }
    uint64_t sample_seed = seed * 1000003ull + uint64_t(idx);
    auto [image, mask] = generate_composite(base, cfg.region, cfg.jitter, sample_seed);

    SampleEntry e;
    e.split = idx < cfg.train_count ? "train" : "test";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%05d", idx);
    std::string stem = cfg.out_dir + "/" + e.split + "/sample_" + buf;
    e.image_path = stem + ".ppm";
    e.mask_path = stem + ".pgm";
    write_ppm(e.image_path, tensor_to_image(image));
    write_pgm(e.mask_path, mask_to_image(mask));
    manifest.entries.push_back(std::move(e));
  }
  save_manifest(cfg.out_dir + "/manifest.txt", manifest);
  return manifest;
}

void save_manifest(const std::string& path, const SampleManifest& manifest) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("manifest: cannot write " + path);
  out << "# seed=" << manifest.seed << "\n";
  for (const auto& e : manifest.entries)
    out << e.split << "\t" << e.image_path << "\t" << e.mask_path << "\n";
}

SampleManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("manifest: cannot open " + path);
  SampleManifest m;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      auto pos = line.find("seed=");
      if (pos != std::string::npos) m.seed = std::stoull(line.substr(pos + 5));
      continue;
    }
    std::istringstream ls(line);
    SampleEntry e;
    if (!std::getline(ls, e.split, '\t') || !std::getline(ls, e.image_path, '\t') ||
        !std::getline(ls, e.mask_path, '\t'))
      throw std::runtime_error("manifest: malformed line: " + line);
    m.entries.push_back(std::move(e));
  }
  return m;
}

std::optional<LoadedPair> load_pair(const std::string& image_path,
                                    const std::string& mask_path, std::ostream* log) {
  ImageU8 img = read_netpbm(image_path);
  ImageU8 msk = read_netpbm(mask_path);
  if (img.channels != 3) throw std::runtime_error("load_pair: PPM expected: " + image_path);
  if (msk.channels != 1) throw std::runtime_error("load_pair: PGM expected: " + mask_path);
  if (img.width != msk.width || img.height != msk.height)
    throw std::runtime_error("load_pair: size mismatch between " + image_path + " and " +
                             mask_path);
  LoadedPair p;
  p.image = image_to_tensor(img);
  p.mask = Tensor<float>({1, msk.height, msk.width});
  Eigen::Index area = 0;
  for (Eigen::Index i = 0; i < p.mask.numel(); ++i) {
    p.mask[i] = msk.pixels[size_t(i)] >= 128 ? 1.0f : 0.0f;
    area += p.mask[i] != 0.0f;
  }
  if (double(area) > 0.5 * double(p.mask.numel())) {
    if (log)
      (*log) << "skip (foreground > 50%): " << image_path << "\n";
    return std::nullopt;
  }
  p.empty_mask = area == 0;
  if (p.empty_mask && log) (*log) << "empty mask: " << mask_path << "\n";
  return p;
}

Tensor<float> image_to_tensor(const ImageU8& img) {
  Tensor<float> t({img.channels, img.height, img.width});
  const Eigen::Index plane = Eigen::Index(img.height) * img.width;
  for (Eigen::Index i = 0; i < plane; ++i)
    for (int c = 0; c < img.channels; ++c)
      t[Eigen::Index(c) * plane + i] = float(img.pixels[size_t(i) * img.channels + c]) / 255.0f;
  return t;
}

ImageU8 tensor_to_image(const Tensor<float>& t) {
  if (t.rank() != 3 || t.dim(0) != 3)
    throw std::runtime_error("tensor_to_image: [3,H,W] expected");
  ImageU8 img;
  img.channels = 3;
  img.height = t.dim(1);
  img.width = t.dim(2);
  const Eigen::Index plane = Eigen::Index(img.height) * img.width;
  img.pixels.resize(size_t(plane) * 3);
  for (Eigen::Index i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c)
      img.pixels[size_t(i) * 3 + size_t(c)] =
          uint8_t(std::lround(std::clamp(double(t[Eigen::Index(c) * plane + i]), 0.0, 1.0) * 255.0));
  return img;
}

ImageU8 mask_to_image(const Tensor<float>& m) {
  if (m.rank() != 3 || m.dim(0) != 1)
    throw std::runtime_error("mask_to_image: [1,H,W] expected");
  ImageU8 img;
  img.channels = 1;
  img.height = m.dim(1);
  img.width = m.dim(2);
  img.pixels.resize(size_t(img.height) * img.width);
  for (Eigen::Index i = 0; i < m.numel(); ++i)
    img.pixels[size_t(i)] = m[i] >= 0.5f ? 255 : 0;
  return img;
}

}  // namespace madis
