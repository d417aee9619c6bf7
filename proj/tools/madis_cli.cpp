#include "madis/gradcheck_suite.hpp"
#include "madis/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace {

using madis::TrainConfig;

struct CommonArgs {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;
};

/// Every config key doubles as a --key CLI flag overriding the config file.
void add_config_options(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "key = value config file");
  static const char* keys[] = {
      "learning_rate", "beta1",     "beta2",     "batch_size", "epochs",
      "image_size",    "lambda_ddm", "lambda_di", "margin",     "seed",
      "data_dir",      "out_dir",   "localizer", "color_map",  "pooled_ap",
      "threads",       "theta",     "lowres_size", "grid_depth", "grid_h",
      "grid_w",        "dom_code_dim"};
  for (const char* key : keys) {
    std::string k = key;
    cmd->add_option_function<std::string>(
        "--" + k, [&args, k](const std::string& v) { args.overrides.emplace_back(k, v); },
        "config override");
  }
}

TrainConfig resolve_config(const CommonArgs& args) {
  std::map<std::string, std::string> file_kv;
  if (!args.config_path.empty()) file_kv = madis::parse_config_file(args.config_path);
  return madis::make_config(file_kv, args.overrides);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"madis: adaptive color-mapping inharmonious region localizer"};
  app.require_subcommand(1);

  CommonArgs args;

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic composite dataset");
  madis::DatasetConfig dcfg;
  uint64_t gen_seed = 7;
  gen->add_option("--out-dir", dcfg.out_dir, "dataset directory")->required();
  gen->add_option("--seed", gen_seed, "dataset seed");
  gen->add_option("--image-size", dcfg.image_size, "square image size");
  gen->add_option("--train-count", dcfg.train_count, "training samples");
  gen->add_option("--test-count", dcfg.test_count, "test samples");
  gen->add_option("--base-image-dir", dcfg.base_image_dir, "optional PPM base images");

  auto* train = app.add_subcommand("train", "train the localizer (and color mapper)");
  add_config_options(train, args);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  std::string ckpt_dir, split = "test";
  eval->add_option("--checkpoint", ckpt_dir, "checkpoint directory")->required();
  eval->add_option("--split", split, "train|test");
  add_config_options(eval, args);

  auto* stats = app.add_subcommand("discrepancy-stats",
                                   "domain discrepancy enlargement percentages");
  stats->add_option("--checkpoint", ckpt_dir, "checkpoint directory")->required();
  stats->add_option("--split", split, "train|test");
  add_config_options(stats, args);

  auto* inf = app.add_subcommand("infer", "predict the inharmonious region of one image");
  std::string image_path, out_mask, out_retouched;
  inf->add_option("--checkpoint", ckpt_dir, "checkpoint directory")->required();
  inf->add_option("--image", image_path, "input PPM")->required();
  inf->add_option("--out-mask", out_mask, "output PGM mask")->required();
  inf->add_option("--out-retouched", out_retouched, "optional output PPM");
  add_config_options(inf, args);

  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every op");
  double gc_tol = 1e-4;
  gc->add_option("--tol", gc_tol, "max relative error");

  auto* dump = app.add_subcommand("dump-field", "write the affine field and guidance map");
  std::string dump_out;
  dump->add_option("--checkpoint", ckpt_dir, "checkpoint directory")->required();
  dump->add_option("--image", image_path, "input PPM")->required();
  dump->add_option("--out-dir", dump_out, "output directory")->required();
  add_config_options(dump, args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      madis::SampleManifest m = madis::build_dataset(dcfg, gen_seed);
      std::cout << "wrote " << m.entries.size() << " samples to " << dcfg.out_dir << "\n";
    } else if (train->parsed()) {
      TrainConfig cfg = resolve_config(args);
      if (cfg.data_dir.empty()) throw madis::UsageError("train: data_dir required");
      madis::TrainResult r = madis::train(cfg);
      std::cout << "checkpoint: " << r.checkpoint_dir << "\nlog: " << r.log_path << "\n"
                << madis::metrics_table(r.final_eval);
    } else if (eval->parsed()) {
      TrainConfig cfg = resolve_config(args);
      if (cfg.data_dir.empty()) throw madis::UsageError("eval: data_dir required");
      madis::EvalResult r = madis::evaluate(cfg, ckpt_dir, split);
      std::cout << madis::metrics_table(r.report);
      if (r.pooled_ap) std::cout << "  pooled AP     " << *r.pooled_ap << "\n";
    } else if (stats->parsed()) {
      TrainConfig cfg = resolve_config(args);
      if (cfg.data_dir.empty()) throw madis::UsageError("discrepancy-stats: data_dir required");
      madis::DiscrepancyStats s = madis::discrepancy_stats(cfg, ckpt_dir, split);
      std::printf("pct_enlarged_by_margin %.4f\npct_enlarged %.4f\nn %d\nn_skipped %d\n",
                  s.pct_enlarged_by_margin, s.pct_enlarged, s.n, s.n_skipped);
    } else if (inf->parsed()) {
      TrainConfig cfg = resolve_config(args);
      madis::InferResult r = madis::infer(cfg, ckpt_dir, image_path, out_mask, out_retouched);
      std::printf("mask_area_fraction %.6f\n", r.mask_area_fraction);
    } else if (gc->parsed()) {
      bool all_pass = madis::gradcheck_detects_planted_fault(gc_tol);
      std::printf("%-22s %s\n", "planted_fault", all_pass ? "detected" : "MISSED");
      for (const auto& c : madis::run_gradcheck_suite(gc_tol)) {
        std::printf("%-22s max_rel_err=%.3e %s\n", c.name.c_str(), c.max_rel_err,
                    c.pass ? "ok" : "FAIL");
        all_pass = all_pass && c.pass;
      }
      if (!all_pass) throw madis::NumericError("gradient check failed");
    } else if (dump->parsed()) {
      TrainConfig cfg = resolve_config(args);
      madis::dump_field(cfg, ckpt_dir, image_path, dump_out);
      std::cout << "wrote field + guidance to " << dump_out << "\n";
    }
  } catch (const madis::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const madis::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const madis::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
