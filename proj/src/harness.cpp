#include "madis/harness.hpp"

#include "madis/adam.hpp"
#include "madis/losses.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace madis {

namespace {

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw UsageError("config: boolean expected, got '" + v + "'");
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  size_t b = s.find_last_not_of(" \t\r\n");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

struct Sample {
  Tensor<float> image;  // [3,H,W]
  Tensor<float> mask;   // [1,H,W]
  bool empty_mask = false;
};

std::vector<Sample> load_split(const TrainConfig& cfg, const std::string& split,
                               std::ostream* log) {
  if (!std::filesystem::exists(cfg.data_dir + "/manifest.txt"))
    throw DataError("no dataset manifest in " + cfg.data_dir);
  SampleManifest manifest = load_manifest(cfg.data_dir + "/manifest.txt");
  std::vector<Sample> out;
  for (const auto& e : manifest.entries) {
    if (e.split != split) continue;
    auto pair = load_pair(e.image_path, e.mask_path, log);
    if (!pair) continue;
    if (pair->image.dim(1) != cfg.image_size || pair->image.dim(2) != cfg.image_size)
      throw DataError("sample size differs from config image_size: " + e.image_path);
    out.push_back({std::move(pair->image), std::move(pair->mask), pair->empty_mask});
  }
  if (out.empty()) throw DataError("no usable '" + split + "' samples in " + cfg.data_dir);
  return out;
}

Tensor<float> stack_images(const std::vector<Sample>& samples, const std::vector<int>& idx) {
  const auto& s0 = samples[size_t(idx[0])].image;
  Tensor<float> out({int(idx.size()), s0.dim(0), s0.dim(1), s0.dim(2)});
  Eigen::Index item = s0.numel();
  for (size_t j = 0; j < idx.size(); ++j)
    out.array().segment(Eigen::Index(j) * item, item) = samples[size_t(idx[j])].image.array();
  return out;
}

Tensor<float> stack_masks(const std::vector<Sample>& samples, const std::vector<int>& idx) {
  const auto& s0 = samples[size_t(idx[0])].mask;
  Tensor<float> out({int(idx.size()), s0.dim(0), s0.dim(1), s0.dim(2)});
  Eigen::Index item = s0.numel();
  for (size_t j = 0; j < idx.size(); ++j)
    out.array().segment(Eigen::Index(j) * item, item) = samples[size_t(idx[j])].mask.array();
  return out;
}

Tensor<float> invert_mask(const Tensor<float>& m) {
  Tensor<float> out(m.shape());
  out.array() = 1.0f - m.array();
  return out;
}

LocalizerKind parse_localizer(const std::string& name) {
  if (name == "unet") return LocalizerKind::kUNet;
  if (name == "stub") return LocalizerKind::kStub;
  throw UsageError("unknown localizer '" + name + "' (expected unet|stub)");
}

/// Forward through the (optional) color mapper and localizer.
struct ForwardOut {
  Var<float> retouched;  // equals the input leaf when color mapping is off
  Var<float> field;      // null when color mapping is off
  Var<float> logits;
};

ForwardOut forward_pipeline(Model& model, Var<float> image) {
  ForwardOut out;
  if (model.cfg.color_map) {
    auto [retouched, field] = color_map(image, model.params, model.cfg.colormap);
    out.retouched = retouched;
    out.field = field;
  } else {
    out.retouched = image;
  }
  out.logits = localizer_forward(out.retouched, model.params, model.localizer);
  return out;
}

void dump_diagnostic(const TrainConfig& cfg, const Tensor<float>& images,
                     const Tensor<float>& masks, int64_t step) {
  Checkpoint diag;
  diag.tensors.emplace("batch.images", images);
  diag.tensors.emplace("batch.masks", masks);
  diag.tensors.emplace("step", Tensor<float>::full({1}, float(step)));
  save_checkpoint(cfg.out_dir + "/diagnostic", diag);
}

std::vector<float> sigmoid_probs(const Tensor<float>& logits, int n) {
  const Eigen::Index plane = logits.numel() / logits.dim(0);
  std::vector<float> probs(static_cast<size_t>(plane));
  for (Eigen::Index i = 0; i < plane; ++i)
    probs[size_t(i)] = 1.0f / (1.0f + std::exp(-logits[Eigen::Index(n) * plane + i]));
  return probs;
}

}  // namespace

void apply_config_kv(TrainConfig& cfg, const std::string& key, const std::string& value) {
  try {
    if (key == "learning_rate") cfg.learning_rate = std::stod(value);
    else if (key == "beta1") cfg.beta1 = std::stod(value);
    else if (key == "beta2") cfg.beta2 = std::stod(value);
    else if (key == "batch_size") cfg.batch_size = std::stoi(value);
    else if (key == "epochs") cfg.epochs = std::stoi(value);
    else if (key == "image_size") cfg.image_size = std::stoi(value);
    else if (key == "lambda_ddm") cfg.lambda_ddm = std::stod(value);
    else if (key == "lambda_di") cfg.lambda_di = std::stod(value);
    else if (key == "margin") cfg.margin = std::stod(value);
    else if (key == "seed") cfg.seed = std::stoull(value);
    else if (key == "data_dir") cfg.data_dir = value;
    else if (key == "out_dir") cfg.out_dir = value;
    else if (key == "localizer") cfg.localizer = value;
    else if (key == "color_map") cfg.color_map = to_bool(value);
    else if (key == "pooled_ap") cfg.pooled_ap = to_bool(value);
    else if (key == "threads") cfg.threads = std::stoi(value);
    else if (key == "theta") cfg.colormap.theta = std::stod(value);
    else if (key == "lowres_size") cfg.colormap.lowres_size = std::stoi(value);
    else if (key == "grid_depth") cfg.colormap.grid_depth = std::stoi(value);
    else if (key == "grid_h") cfg.colormap.grid_h = std::stoi(value);
    else if (key == "grid_w") cfg.colormap.grid_w = std::stoi(value);
    else if (key == "dom_code_dim") cfg.domenc.code_dim = std::stoi(value);
    else throw UsageError("unknown config key: " + key);
  } catch (const std::invalid_argument&) {
    throw UsageError("config: bad value for " + key + ": '" + value + "'");
  }
}

std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos) throw UsageError("config: expected 'key = value': " + line);
    kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return kv;
}

TrainConfig make_config(const std::map<std::string, std::string>& file_kv,
                        const std::vector<std::pair<std::string, std::string>>& overrides) {
  TrainConfig cfg;
  for (const auto& [k, v] : file_kv) apply_config_kv(cfg, k, v);
  for (const auto& [k, v] : overrides) apply_config_kv(cfg, k, v);
  if (cfg.image_size % 16 != 0)
    throw UsageError("image_size must be divisible by 16");
  return cfg;
}

Model build_model(const TrainConfig& cfg) {
  Model model;
  model.cfg = cfg;
  model.localizer = parse_localizer(cfg.localizer);
  std::seed_seq sseq{uint32_t(cfg.seed), uint32_t(cfg.seed >> 32), uint32_t(0x5eed)};
  std::mt19937 rng(sseq);
  if (cfg.color_map) {
    init_colormap_params(model.params, cfg.colormap, rng);
    init_domenc_params(model.params, cfg.domenc, rng);
  }
  init_localizer_params(model.params, model.localizer, rng);
  return model;
}

void load_model(Model& model, const std::string& checkpoint_dir) {
  Checkpoint ckpt = load_checkpoint(checkpoint_dir);
  load_into_store(ckpt, model.params);
}

TrainResult train(const TrainConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  std::ofstream events(cfg.out_dir + "/events.log");
  std::vector<Sample> samples = load_split(cfg, "train", &events);

  Model model = build_model(cfg);
  Adam<float>::Config acfg;
  acfg.lr = float(cfg.learning_rate);
  acfg.beta1 = float(cfg.beta1);
  acfg.beta2 = float(cfg.beta2);
  Adam<float> adam(model.params, acfg);

  std::string log_path = cfg.out_dir + "/train_log.csv";
  std::ofstream log(log_path);
  log << "step,ddm,di,loc,total\n";
  log.precision(9);

  LossWeights<float> weights{float(cfg.lambda_ddm), float(cfg.lambda_di), float(cfg.margin)};
  const bool use_codes = cfg.color_map && (cfg.lambda_ddm > 0 || cfg.lambda_di > 0);
  const int n_batches = int(samples.size()) / cfg.batch_size;
  if (n_batches == 0) throw DataError("fewer samples than one batch");

  int64_t step = 0;
  std::string ckpt_dir = cfg.out_dir + "/checkpoint";
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order(samples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
    std::seed_seq eseq{uint32_t(cfg.seed), uint32_t(0xDA7A), uint32_t(epoch)};
    std::mt19937 erng(eseq);
    std::shuffle(order.begin(), order.end(), erng);

    for (int b = 0; b < n_batches; ++b) {
      std::vector<int> idx(order.begin() + Eigen::Index(b) * cfg.batch_size,
                           order.begin() + Eigen::Index(b + 1) * cfg.batch_size);
      Tensor<float> images = stack_images(samples, idx);
      Tensor<float> masks = stack_masks(samples, idx);
      Var<float> image_leaf = make_var(images, false);

      ForwardOut fwd = forward_pipeline(model, image_leaf);

      Var<float> ddm, di;
      if (use_codes) {
        // Samples with an empty mask contribute no code losses.
        std::vector<int> valid;
        const Eigen::Index mplane = Eigen::Index(cfg.image_size) * cfg.image_size;
        for (int j = 0; j < cfg.batch_size; ++j) {
          if (masks.array().segment(Eigen::Index(j) * mplane, mplane).sum() > 0)
            valid.push_back(j);
          else
            events << "step " << step << ": empty mask in batch, code losses skipped\n";
        }
        if (!valid.empty()) {
          std::vector<int> valid_global;
          for (int j : valid) valid_global.push_back(idx[size_t(j)]);
          Tensor<float> m_sub = stack_masks(samples, valid_global);
          Tensor<float> m_inv = invert_mask(m_sub);
          Var<float> orig_sub = select_batch(image_leaf, valid);
          Var<float> ret_sub = select_batch(fwd.retouched, valid);
          Var<float> zf = extract_code(orig_sub, m_sub, model.params, cfg.domenc);
          Var<float> zb = extract_code(orig_sub, m_inv, model.params, cfg.domenc);
          Var<float> zpf = extract_code(ret_sub, m_sub, model.params, cfg.domenc);
          Var<float> zpb = extract_code(ret_sub, m_inv, model.params, cfg.domenc);
          ddm = ddm_loss(zf, zb, zpf, zpb, weights.margin);
          di = di_loss(zf, zb, zpf, zpb);
        }
      }
      if (!ddm) ddm = make_var(Tensor<float>::scalar(0.0f), false);
      if (!di) di = make_var(Tensor<float>::scalar(0.0f), false);

      Var<float> loc = localization_loss(fwd.logits, masks);
      LossReport<float> report = total_loss(ddm, di, loc, weights);
      if (!std::isfinite(report.total->value[0])) {
        dump_diagnostic(cfg, images, masks, step);
        throw NumericError("NaN/Inf loss at step " + std::to_string(step) +
                           "; diagnostic batch dumped to " + cfg.out_dir + "/diagnostic");
      }
      backward(report.total);
      adam.step();
      model.params.zero_grads();

      ++step;
      log << step << "," << report.ddm->value[0] << "," << report.di->value[0] << ","
          << report.loc->value[0] << "," << report.total->value[0] << "\n";
    }

    Checkpoint ckpt = store_to_checkpoint(model.params);
    for (auto& [name, m] : adam.first_moments()) ckpt.tensors.emplace("optim.m." + name, m);
    for (auto& [name, v] : adam.second_moments()) ckpt.tensors.emplace("optim.v." + name, v);
    ckpt.tensors.emplace("optim.step", Tensor<float>::full({1}, float(adam.step_count())));
    save_checkpoint(ckpt_dir, ckpt);
  }
  log.close();

  TrainResult result;
  result.checkpoint_dir = ckpt_dir;
  result.log_path = log_path;
  result.final_eval = evaluate(cfg, ckpt_dir, "test").report;
  std::ofstream eval_csv(cfg.out_dir + "/final_eval.csv");
  eval_csv << metrics_csv(result.final_eval);
  return result;
}

EvalResult evaluate(const TrainConfig& cfg, const std::string& checkpoint_dir,
                    const std::string& split) {
  std::vector<Sample> samples = load_split(cfg, split, nullptr);
  Model model = build_model(cfg);
  load_model(model, checkpoint_dir);

  std::vector<PerImageMetrics> per_image;
  std::vector<float> pooled_pred;
  std::vector<uint8_t> pooled_gt;
  for (const auto& s : samples) {
    Tensor<float> img({1, 3, cfg.image_size, cfg.image_size}, s.image.array());
    Var<float> leaf = make_var(std::move(img), false);
    ForwardOut fwd = forward_pipeline(model, leaf);
    std::vector<float> probs = sigmoid_probs(fwd.logits->value, 0);
    std::vector<uint8_t> gt(probs.size());
    for (size_t i = 0; i < gt.size(); ++i) gt[i] = s.mask[Eigen::Index(i)] != 0 ? 1 : 0;
    PerImageMetrics m;
    m.ap = average_precision(probs, gt);
    std::tie(m.f1, m.iou) = f1_iou(probs, gt);
    per_image.push_back(m);
    if (cfg.pooled_ap) {
      pooled_pred.insert(pooled_pred.end(), probs.begin(), probs.end());
      pooled_gt.insert(pooled_gt.end(), gt.begin(), gt.end());
    }
  }
  EvalResult result;
  result.report = aggregate(std::move(per_image));
  if (cfg.pooled_ap) result.pooled_ap = pooled_average_precision(pooled_pred, pooled_gt);
  return result;
}

DiscrepancyStats discrepancy_stats(const TrainConfig& cfg, const std::string& checkpoint_dir,
                                   const std::string& split) {
  if (!cfg.color_map) throw UsageError("discrepancy-stats requires color_map = true");
  std::vector<Sample> samples = load_split(cfg, split, nullptr);
  Model model = build_model(cfg);
  load_model(model, checkpoint_dir);

  DiscrepancyStats stats;
  const float margin = float(cfg.margin);
  for (const auto& s : samples) {
    if (s.empty_mask || s.mask.array().sum() == 0) {
      ++stats.n_skipped;
      continue;
    }
    Tensor<float> img({1, 3, cfg.image_size, cfg.image_size}, s.image.array());
    Tensor<float> mask({1, 1, cfg.image_size, cfg.image_size}, s.mask.array());
    Tensor<float> inv = invert_mask(mask);
    Var<float> leaf = make_var(std::move(img), false);
    Var<float> retouched = color_map(leaf, model.params, cfg.colormap).first;
    auto dist = [&](Var<float> im, const Tensor<float>& a, const Tensor<float>& b) {
      Var<float> zf = extract_code(im, a, model.params, cfg.domenc);
      Var<float> zb = extract_code(im, b, model.params, cfg.domenc);
      return rows_l2_distance(zf, zb)->value[0];
    };
    float d = dist(leaf, mask, inv);
    float dp = dist(retouched, mask, inv);
    stats.pct_enlarged_by_margin += (d + margin < dp) ? 1 : 0;
    stats.pct_enlarged += (d < dp) ? 1 : 0;
    ++stats.n;
  }
  if (stats.n > 0) {
    stats.pct_enlarged_by_margin *= 100.0 / stats.n;
    stats.pct_enlarged *= 100.0 / stats.n;
  }
  return stats;
}

InferResult infer(const TrainConfig& cfg, const std::string& checkpoint_dir,
                  const std::string& image_path, const std::string& out_mask_path,
                  const std::string& out_retouched_path) {
  ImageU8 raw = read_netpbm(image_path);
  if (raw.channels != 3) throw DataError("infer: PPM image expected");
  if (raw.width % 16 != 0 || raw.height % 16 != 0)
    throw DataError("infer: image size must be divisible by 16");
  Tensor<float> img3 = image_to_tensor(raw);
  Tensor<float> img({1, 3, raw.height, raw.width}, img3.array());
  Model model = build_model(cfg);
  load_model(model, checkpoint_dir);

  Var<float> leaf = make_var(std::move(img), false);
  ForwardOut fwd = forward_pipeline(model, leaf);
  std::vector<float> probs = sigmoid_probs(fwd.logits->value, 0);

  Tensor<float> mask({1, raw.height, raw.width});
  Eigen::Index area = 0;
  for (Eigen::Index i = 0; i < mask.numel(); ++i) {
    mask[i] = probs[size_t(i)] >= 0.5f ? 1.0f : 0.0f;
    area += mask[i] != 0;
  }
  write_pgm(out_mask_path, mask_to_image(mask));
  if (!out_retouched_path.empty()) {
    Tensor<float> ret({3, raw.height, raw.width}, fwd.retouched->value.array());
    write_ppm(out_retouched_path, tensor_to_image(ret));
  }
  InferResult r;
  r.mask_area_fraction = double(area) / double(mask.numel());
  return r;
}

void dump_field(const TrainConfig& cfg, const std::string& checkpoint_dir,
                const std::string& image_path, const std::string& out_dir) {
  if (!cfg.color_map) throw UsageError("dump-field requires color_map = true");
  ImageU8 raw = read_netpbm(image_path);
  if (raw.channels != 3) throw DataError("dump-field: PPM image expected");
  Tensor<float> img3 = image_to_tensor(raw);
  Tensor<float> img({1, 3, raw.height, raw.width}, img3.array());
  Model model = build_model(cfg);
  load_model(model, checkpoint_dir);
  Var<float> leaf = make_var(std::move(img), false);
  Var<float> guidance = compute_guidance(leaf, model.params);
  Var<float> grid = predict_grid(leaf, model.params, cfg.colormap);
  Var<float> field = slice_grid(grid, guidance);
  Checkpoint dump;
  dump.tensors.emplace("field", field->value);
  dump.tensors.emplace("guidance", guidance->value);
  save_checkpoint(out_dir, dump);
}

}  // namespace madis
