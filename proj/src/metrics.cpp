#include "madis/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace madis {

namespace {

struct Curve {
  std::array<double, 256> precision;
  std::array<double, 256> recall;
};

// Precision/recall at the 256 uniform thresholds t = k/255, pixels predicted
// positive when pred >= t. Precision with zero predicted positives is 1.
Curve pr_curve(const std::vector<float>& pred, const std::vector<uint8_t>& gt,
               size_t n_pos) {
  if (pred.size() != gt.size()) throw std::invalid_argument("metrics: size mismatch");
  // Histogram by quantized score; suffix sums give counts above threshold.
  std::array<int64_t, 257> tp_at{}, pp_at{};
  for (size_t i = 0; i < pred.size(); ++i) {
    int bin = int(std::clamp(std::floor(double(pred[i]) * 255.0), 0.0, 255.0));
    // pred >= k/255 holds for all k <= bin
    ++pp_at[size_t(bin)];
    if (gt[i]) ++tp_at[size_t(bin)];
  }
  int64_t tp = 0, pp = 0;
  Curve c;
  for (int k = 255; k >= 0; --k) {
    tp += tp_at[size_t(k)];
    pp += pp_at[size_t(k)];
    c.precision[size_t(k)] = pp > 0 ? double(tp) / double(pp) : 1.0;
    c.recall[size_t(k)] = double(tp) / double(n_pos);
  }
  return c;
}

double interpolated_ap(const Curve& c) {
  // Thresholds descending = recall nondecreasing. Rectify precision to be
  // monotonically nonincreasing in recall, then sum (R_k - R_{k-1}) * P_k.
  std::array<double, 256> rect{};
  double run = 0;
  for (int k = 0; k < 256; ++k) {  // from the high-recall end
    run = std::max(run, c.precision[size_t(k)]);
    rect[size_t(k)] = run;
  }
  double ap = 0, prev_r = 0;
  for (int k = 255; k >= 0; --k) {
    ap += (c.recall[size_t(k)] - prev_r) * rect[size_t(k)];
    prev_r = c.recall[size_t(k)];
  }
  return ap;
}

size_t count_pos(const std::vector<uint8_t>& gt) {
  size_t n = 0;
  for (uint8_t g : gt) n += g ? 1 : 0;
  return n;
}

}  // namespace

std::optional<double> average_precision(const std::vector<float>& pred,
                                        const std::vector<uint8_t>& gt) {
  size_t n_pos = count_pos(gt);
  if (n_pos == 0) return std::nullopt;
  return interpolated_ap(pr_curve(pred, gt, n_pos));
}

std::optional<double> pooled_average_precision(const std::vector<float>& pred,
                                               const std::vector<uint8_t>& gt) {
  return average_precision(pred, gt);
}

std::pair<double, double> f1_iou(const std::vector<float>& pred,
                                 const std::vector<uint8_t>& gt, double threshold) {
  if (pred.size() != gt.size()) throw std::invalid_argument("metrics: size mismatch");
  if (!(threshold > 0.0 && threshold < 1.0))
    throw std::invalid_argument("metrics: threshold outside (0,1)");
  int64_t tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    bool p = double(pred[i]) >= threshold, g = gt[i] != 0;
    tp += (p && g);
    fp += (p && !g);
    fn += (!p && g);
  }
  if (tp + fp + fn == 0) return {1.0, 1.0};
  double f1 = double(2 * tp) / double(2 * tp + fp + fn);
  double iou = double(tp) / double(tp + fp + fn);
  return {f1, iou};
}

MetricsReport aggregate(std::vector<PerImageMetrics> per_image) {
  MetricsReport r;
  double ap_sum = 0, f1_sum = 0, iou_sum = 0;
  int ap_n = 0;
  for (const auto& m : per_image) {
    if (m.ap)
      ap_sum += *m.ap, ++ap_n;
    else
      ++r.n_ap_skipped;
    f1_sum += m.f1;
    iou_sum += m.iou;
  }
  r.n_images = int(per_image.size());
  if (r.n_images > 0) {
    r.f1 = f1_sum / r.n_images;
    r.iou = iou_sum / r.n_images;
  }
  if (ap_n > 0) r.ap = ap_sum / ap_n;
  r.per_image = std::move(per_image);
  return r;
}

std::string metrics_csv(const MetricsReport& r) {
  std::ostringstream os;
  os.precision(10);
  os << "metric,value\n"
     << "ap," << r.ap << "\n"
     << "f1," << r.f1 << "\n"
     << "iou," << r.iou << "\n"
     << "n_images," << r.n_images << "\n"
     << "n_ap_skipped," << r.n_ap_skipped << "\n";
  return os.str();
}

std::string metrics_table(const MetricsReport& r) {
  std::ostringstream os;
  os.precision(6);
  os << "  metric        value\n"
     << "  ------------  ----------\n"
     << "  AP            " << r.ap << "\n"
     << "  F1            " << r.f1 << "\n"
     << "  IoU           " << r.iou << "\n"
     << "  images        " << r.n_images << "\n"
     << "  AP skipped    " << r.n_ap_skipped << "\n";
  return os.str();
}

}  // namespace madis
