#pragma once

#include <cstdint>
#include <vector>

#include "ccfpse/labels.hpp"
#include "ccfpse/tensor.hpp"

namespace ccfpse::testing {

/// Spatially varying depthwise convolution written as five plain loops over
/// (c, i, j, m, n) per sample; x [N,C,H,W], v [N,C,k,k,H,W].
inline std::vector<double> cdw_oracle(const Tensor<double>& x, const Tensor<double>& v) {
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3), k = v.dim(2);
  const auto p = k / 2;
  std::vector<double> y(static_cast<std::size_t>(n * c * h * w), 0.0);
  for (std::int64_t s = 0; s < n; ++s)
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t i = 0; i < h; ++i)
        for (std::int64_t j = 0; j < w; ++j) {
          double acc = 0.0;
          for (std::int64_t m = 0; m < k; ++m)
            for (std::int64_t q = 0; q < k; ++q) {
              const auto a = i + m - p, b = j + q - p;
              if (a < 0 || a >= h || b < 0 || b >= w) continue;
              acc += x.at({s, ch, a, b}) * v.at({s, ch, m, q, i, j});
            }
          y[static_cast<std::size_t>(((s * c + ch) * h + i) * w + j)] = acc;
        }
  return y;
}

struct IouOracle {
  std::vector<double> iou;      // -1 where the union is empty
  std::vector<bool> in_gt;
  double miou = 0.0;
  double accuracy = 0.0;
};

/// Per-class IoU counted directly as |pred==c and gt==c| / |pred==c or gt==c|
/// over all pixels of all pairs; mIoU over classes present in the ground truth.
inline IouOracle iou_oracle(const std::vector<LabelMap>& preds, const std::vector<LabelMap>& gts, int num_labels) {
  IouOracle r;
  r.iou.assign(static_cast<std::size_t>(num_labels), -1.0);
  r.in_gt.assign(static_cast<std::size_t>(num_labels), false);
  std::int64_t correct = 0, total = 0;
  for (int c = 0; c < num_labels; ++c) {
    std::int64_t inter = 0, uni = 0;
    for (std::size_t s = 0; s < preds.size(); ++s) {
      for (int i = 0; i < gts[s].height(); ++i)
        for (int j = 0; j < gts[s].width(); ++j) {
          const bool p = preds[s].at(i, j) == c, g = gts[s].at(i, j) == c;
          inter += (p && g) ? 1 : 0;
          uni += (p || g) ? 1 : 0;
          if (g) r.in_gt[static_cast<std::size_t>(c)] = true;
        }
    }
    if (uni > 0) r.iou[static_cast<std::size_t>(c)] = static_cast<double>(inter) / static_cast<double>(uni);
  }
  for (std::size_t s = 0; s < preds.size(); ++s)
    for (int i = 0; i < gts[s].height(); ++i)
      for (int j = 0; j < gts[s].width(); ++j) {
        correct += preds[s].at(i, j) == gts[s].at(i, j) ? 1 : 0;
        ++total;
      }
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < num_labels; ++c) {
    if (!r.in_gt[static_cast<std::size_t>(c)]) continue;
    sum += r.iou[static_cast<std::size_t>(c)];
    ++present;
  }
  r.miou = present ? sum / present : 0.0;
  r.accuracy = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  return r;
}

}  // namespace ccfpse::testing
