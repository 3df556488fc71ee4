#include "ccfpse/metrics.hpp"

#include <string>

namespace ccfpse {

LabelMap segment_by_palette(const Tensor<float>& image, const SyntheticTaskSpec& spec) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("segment_by_palette: image must be [3,H,W], got " + shape_string(image.shape()));
  }
  const auto palette = spec.colors();
  const std::int64_t h = image.dim(1);
  const std::int64_t w = image.dim(2);
  const std::int64_t plane = h * w;
  const auto px = image.data();
  std::vector<std::int32_t> ids(static_cast<std::size_t>(plane));
  for (std::int64_t i = 0; i < plane; ++i) {
    std::int32_t best = 0;
    double best_d = 0;
    for (std::size_t l = 0; l < palette.size(); ++l) {
      double d = 0;
      for (int c = 0; c < 3; ++c) {
        const double diff = static_cast<double>(px[static_cast<std::size_t>(c * plane + i)]) - palette[l][c];
        d += diff * diff;
      }
      if (l == 0 || d < best_d) {
        best = static_cast<std::int32_t>(l);
        best_d = d;
      }
    }
    ids[static_cast<std::size_t>(i)] = best;
  }
  return LabelMap(static_cast<int>(h), static_cast<int>(w), spec.num_labels, std::move(ids));
}

ConfusionMatrix::ConfusionMatrix(int num_labels) : num_labels_(num_labels) {
  if (num_labels <= 0) throw ArgumentError("confusion matrix: num_labels must be positive");
  counts_.assign(static_cast<std::size_t>(num_labels) * static_cast<std::size_t>(num_labels), 0);
}

void ConfusionMatrix::add(const LabelMap& pred, const LabelMap& gt) {
  if (pred.height() != gt.height() || pred.width() != gt.width()) {
    throw DimensionError("confusion matrix: prediction " + std::to_string(pred.height()) + "x" +
                         std::to_string(pred.width()) + " vs ground truth " + std::to_string(gt.height()) + "x" +
                         std::to_string(gt.width()));
  }
  const auto p = pred.ids();
  const auto g = gt.ids();
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0 || p[i] >= num_labels_ || g[i] < 0 || g[i] >= num_labels_) {
      throw DataError("confusion matrix: label id outside [0, " + std::to_string(num_labels_) + ")");
    }
    ++counts_[static_cast<std::size_t>(g[i] * num_labels_ + p[i])];
  }
  total_ += static_cast<std::int64_t>(p.size());
}

std::int64_t ConfusionMatrix::count(int gt, int pred) const {
  return counts_.at(static_cast<std::size_t>(gt * num_labels_ + pred));
}

SegMetrics ConfusionMatrix::metrics() const {
  SegMetrics m;
  std::int64_t correct = 0;
  double iou_sum = 0;
  int present = 0;
  for (int c = 0; c < num_labels_; ++c) {
    const std::int64_t tp = count(c, c);
    std::int64_t gt_total = 0;
    std::int64_t pred_total = 0;
    for (int o = 0; o < num_labels_; ++o) {
      gt_total += count(c, o);
      pred_total += count(o, c);
    }
    correct += tp;
    const std::int64_t uni = gt_total + pred_total - tp;
    if (uni == 0) {
      m.per_class_iou.push_back(std::nullopt);
      continue;
    }
    const double iou = static_cast<double>(tp) / static_cast<double>(uni);
    m.per_class_iou.push_back(iou);
    if (gt_total > 0) {
      iou_sum += iou;
      ++present;
    }
  }
  m.miou = present > 0 ? iou_sum / present : 0.0;
  m.accuracy = total_ > 0 ? static_cast<double>(correct) / static_cast<double>(total_) : 0.0;
  return m;
}

SegMetrics compute_miou(const LabelMap& pred, const LabelMap& gt, int num_labels) {
  ConfusionMatrix cm(num_labels);
  cm.add(pred, gt);
  return cm.metrics();
}

}  // namespace ccfpse
