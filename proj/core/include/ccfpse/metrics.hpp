#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ccfpse/data.hpp"

namespace ccfpse {

/// Nearest palette color per pixel by squared channel distance; ties go to the
/// lowest label id. `image` is [3,H,W].
LabelMap segment_by_palette(const Tensor<float>& image, const SyntheticTaskSpec& spec);

struct SegMetrics {
  /// IoU per class; nullopt where the class appears in neither map.
  std::vector<std::optional<double>> per_class_iou;
  /// Mean IoU over classes present in the ground truth.
  double miou = 0.0;
  double accuracy = 0.0;
};

/// Accumulates (gt, pred) pixel counts over any number of map pairs.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_labels);

  /// DimensionError on extent mismatch, DataError on ids outside the range.
  void add(const LabelMap& pred, const LabelMap& gt);

  std::int64_t count(int gt, int pred) const;
  std::int64_t total() const noexcept { return total_; }
  int num_labels() const noexcept { return num_labels_; }
  SegMetrics metrics() const;

 private:
  int num_labels_;
  std::int64_t total_ = 0;
  std::vector<std::int64_t> counts_;  // row gt, column pred
};

SegMetrics compute_miou(const LabelMap& pred, const LabelMap& gt, int num_labels);

}  // namespace ccfpse
