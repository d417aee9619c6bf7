#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace madis {

/// Pixel-level localization metrics following the AP / F1 / IoU protocol.
struct PerImageMetrics {
  std::optional<double> ap;  // absent for empty ground truth
  double f1 = 0;
  double iou = 0;
};

struct MetricsReport {
  double ap = 0;
  double f1 = 0;
  double iou = 0;
  int n_images = 0;
  int n_ap_skipped = 0;  // empty-gt images, undefined AP
  std::vector<PerImageMetrics> per_image;
};

/// Interpolated average precision over 256 uniform thresholds t = k/255.
/// Returns nullopt when the ground truth is empty.
std::optional<double> average_precision(const std::vector<float>& pred,
                                        const std::vector<uint8_t>& gt);

/// F1 and IoU after binarizing at `threshold` (>=). Empty-union convention:
/// both masks empty -> (1, 1).
std::pair<double, double> f1_iou(const std::vector<float>& pred,
                                 const std::vector<uint8_t>& gt,
                                 double threshold = 0.5);

MetricsReport aggregate(std::vector<PerImageMetrics> per_image);

/// Pooled-AP variant: one precision/recall curve over all pixels of all
/// images together.
std::optional<double> pooled_average_precision(const std::vector<float>& pred,
                                               const std::vector<uint8_t>& gt);

std::string metrics_csv(const MetricsReport& r);
std::string metrics_table(const MetricsReport& r);

}  // namespace madis
