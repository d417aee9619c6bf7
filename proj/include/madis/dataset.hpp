#pragma once

#include "madis/netpbm.hpp"
#include "madis/tensor.hpp"

#include <optional>
#include <random>
#include <string>
#include <vector>

namespace madis {

/// Geometry of the synthetic inharmonious regions.
struct RegionSpec {
  int min_count = 1;
  int max_count = 3;  // generator supports up to 9 disjoint regions
  double min_area_fraction = 0.02;
  double max_area_fraction = 0.3;
  double total_area_cap = 0.5;  // the foreground-size filter, by construction
};

/// Color/lighting jitter applied inside each region.
struct JitterSpec {
  double gain_lo = 0.6, gain_hi = 1.4;    // per-channel
  double bias_lo = -0.2, bias_hi = 0.2;   // per-channel
  double gamma_lo = 0.7, gamma_hi = 1.4;  // shared across channels
  double min_shift = 0.03;                // minimum mean |dI| inside the region
};

struct DatasetConfig {
  std::string out_dir;
  int image_size = 64;
  int train_count = 512;
  int test_count = 128;
  RegionSpec region;
  JitterSpec jitter;
  std::string base_image_dir;  // optional PPM sources instead of procedural bases
};

struct SampleEntry {
  std::string split;  // "train" or "test"
  std::string image_path;
  std::string mask_path;
};

struct SampleManifest {
  std::vector<SampleEntry> entries;
  uint64_t seed = 0;
};

struct JitterDraw {
  double gain[3];
  double bias[3];
  double gamma;
};

JitterDraw sample_jitter(const JitterSpec& spec, std::mt19937& rng);

/// Composites jittered disjoint regions onto `base` (values in [0,1],
/// [3,H,W]). Pure function of (base, specs, seed). Throws if disjoint
/// placement fails after 100 attempts per region.
std::pair<Tensor<float>, Tensor<float>> generate_composite(const Tensor<float>& base,
                                                           const RegionSpec& region,
                                                           const JitterSpec& jitter,
                                                           uint64_t seed);

/// Procedural base texture: smooth per-channel gradients plus random blobs.
Tensor<float> procedural_base(int size, std::mt19937& rng);

/// Generates the on-disk dataset (PPM composites + PGM masks) and the
/// manifest file `<out_dir>/manifest.txt`.
SampleManifest build_dataset(const DatasetConfig& cfg, uint64_t seed);

SampleManifest load_manifest(const std::string& path);
void save_manifest(const std::string& path, const SampleManifest& manifest);

struct LoadedPair {
  Tensor<float> image;  // [3,H,W] in [0,1]
  Tensor<float> mask;   // [1,H,W] in {0,1}
  bool empty_mask = false;
};

/// Decodes a (PPM, PGM) pair; mask binarized at 128. Returns nullopt (with a
/// log line on `log`) for pairs whose mask area exceeds 50%.
std::optional<LoadedPair> load_pair(const std::string& image_path,
                                    const std::string& mask_path,
                                    std::ostream* log = nullptr);

Tensor<float> image_to_tensor(const ImageU8& img);
ImageU8 tensor_to_image(const Tensor<float>& t);  // [3,H,W] -> PPM buffer
ImageU8 mask_to_image(const Tensor<float>& m);    // [1,H,W] -> strictly {0,255}

}  // namespace madis
