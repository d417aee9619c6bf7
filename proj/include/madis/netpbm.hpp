#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace madis {

/// 8-bit image buffers for binary Netpbm files (PPM P6 / PGM P5, maxval 255).
struct ImageU8 {
  int width = 0;
  int height = 0;
  int channels = 0;  // 3 for PPM, 1 for PGM
  std::vector<uint8_t> pixels;  // row-major, interleaved channels
};

ImageU8 read_netpbm(const std::string& path);
void write_ppm(const std::string& path, const ImageU8& img);
void write_pgm(const std::string& path, const ImageU8& img);

}  // namespace madis
