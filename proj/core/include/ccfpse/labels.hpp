#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ccfpse/tensor.hpp"

namespace ccfpse {

/// Integer H x W grid of semantic class ids in [0, num_labels).
class LabelMap {
 public:
  LabelMap() = default;
  LabelMap(int height, int width, int num_labels, std::int32_t fill = 0);
  /// Throws DataError if any id falls outside [0, num_labels).
  LabelMap(int height, int width, int num_labels, std::vector<std::int32_t> ids);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int num_labels() const noexcept { return num_labels_; }
  std::span<const std::int32_t> ids() const noexcept { return ids_; }

  std::int32_t at(int i, int j) const { return ids_[static_cast<std::size_t>(i * width_ + j)]; }
  void set(int i, int j, std::int32_t id);

  bool operator==(const LabelMap& other) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int num_labels_ = 0;
  std::vector<std::int32_t> ids_;
};

/// Nearest-neighbour resampling of the id grid: cell (i,j) takes the source
/// id at (floor(i*H/h), floor(j*W/w)).
LabelMap downsample_nearest(const LabelMap& map, int height, int width);

/// [N, num_labels, H, W] with exactly one 1 per spatial location. All maps must
/// share extents and label count.
template <typename T>
Tensor<T> one_hot(std::span<const LabelMap> maps);

/// Concatenated ids of a batch, laid out [N,H,W].
std::vector<std::int32_t> stack_ids(std::span<const LabelMap> maps);

}  // namespace ccfpse
