#pragma once

#include "madis/checkpoint.hpp"
#include "madis/colormap.hpp"
#include "madis/dataset.hpp"
#include "madis/domenc.hpp"
#include "madis/metrics.hpp"
#include "madis/unet.hpp"

#include <map>
#include <optional>
#include <string>

namespace madis {

// CLI exit codes: 1 usage, 2 data, 3 numeric failure.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int batch_size = 8;
  int epochs = 20;
  int image_size = 64;
  double lambda_ddm = 0.001;
  double lambda_di = 0.001;
  double margin = 0.01;
  uint64_t seed = 7;
  std::string data_dir;
  std::string out_dir = "out";
  std::string localizer = "unet";  // "unet" | "stub"
  bool color_map = true;           // false = RGB baseline, plain localizer on I
  bool pooled_ap = false;
  int threads = 1;
  ColorMapConfig colormap;
  DomainEncoderConfig domenc;
};

/// Applies `key = value` pairs (config file or CLI overrides) onto a config.
/// Unknown keys throw UsageError.
void apply_config_kv(TrainConfig& cfg, const std::string& key, const std::string& value);
std::map<std::string, std::string> parse_config_file(const std::string& path);
TrainConfig make_config(const std::map<std::string, std::string>& file_kv,
                        const std::vector<std::pair<std::string, std::string>>& overrides);

/// The model is a ParamStore plus the pieces of config that shape it.
struct Model {
  TrainConfig cfg;
  ParamStore<float> params;
  LocalizerKind localizer = LocalizerKind::kUNet;
};

Model build_model(const TrainConfig& cfg);
void load_model(Model& model, const std::string& checkpoint_dir);

struct TrainResult {
  std::string checkpoint_dir;
  std::string log_path;
  MetricsReport final_eval;
};

TrainResult train(const TrainConfig& cfg);

struct EvalResult {
  MetricsReport report;
  std::optional<double> pooled_ap;
};

EvalResult evaluate(const TrainConfig& cfg, const std::string& checkpoint_dir,
                    const std::string& split = "test");

struct DiscrepancyStats {
  double pct_enlarged_by_margin = 0;  // % with d + m < d'
  double pct_enlarged = 0;            // % with d < d'
  int n = 0;
  int n_skipped = 0;  // empty-mask images
};

DiscrepancyStats discrepancy_stats(const TrainConfig& cfg, const std::string& checkpoint_dir,
                                   const std::string& split);

struct InferResult {
  double mask_area_fraction = 0;
};

InferResult infer(const TrainConfig& cfg, const std::string& checkpoint_dir,
                  const std::string& image_path, const std::string& out_mask_path,
                  const std::string& out_retouched_path = "");

/// Writes the AffineField and GuidanceMap of one image in the checkpoint
/// container format (entries "field", "guidance").
void dump_field(const TrainConfig& cfg, const std::string& checkpoint_dir,
                const std::string& image_path, const std::string& out_dir);

}  // namespace madis
