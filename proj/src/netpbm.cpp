#include "madis/netpbm.hpp"

#include <fstream>
#include <stdexcept>

namespace madis {

namespace {

// Skips whitespace and '#' comment lines between header tokens.
int read_header_int(std::istream& in) {
  int c;
  while ((c = in.peek()) != EOF) {
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int v;
  if (!(in >> v)) throw std::runtime_error("netpbm: malformed header");
  return v;
}

void write_binary(const std::string& path, const std::string& magic, const ImageU8& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("netpbm: cannot open for write: " + path);
  out << magic << "\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            std::streamsize(img.pixels.size()));
  if (!out) throw std::runtime_error("netpbm: write failed: " + path);
}

}  // namespace

ImageU8 read_netpbm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("netpbm: cannot open: " + path);
  std::string magic;
  in >> magic;
  ImageU8 img;
  if (magic == "P6")
    img.channels = 3;
  else if (magic == "P5")
    img.channels = 1;
  else
    throw std::runtime_error("netpbm: unsupported magic '" + magic + "' in " + path);
  img.width = read_header_int(in);
  img.height = read_header_int(in);
  int maxval = read_header_int(in);
  if (img.width <= 0 || img.height <= 0 || maxval != 255)
    throw std::runtime_error("netpbm: unsupported header in " + path);
  in.get();  // single whitespace after maxval
  img.pixels.resize(size_t(img.width) * img.height * img.channels);
  in.read(reinterpret_cast<char*>(img.pixels.data()), std::streamsize(img.pixels.size()));
  if (in.gcount() != std::streamsize(img.pixels.size()))
    throw std::runtime_error("netpbm: truncated pixel data in " + path);
  return img;
}

void write_ppm(const std::string& path, const ImageU8& img) {
  if (img.channels != 3) throw std::runtime_error("write_ppm: 3 channels required");
  write_binary(path, "P6", img);
}

void write_pgm(const std::string& path, const ImageU8& img) {
  if (img.channels != 1) throw std::runtime_error("write_pgm: 1 channel required");
  write_binary(path, "P5", img);
}

}  // namespace madis
