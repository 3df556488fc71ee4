#include "ccfpse/labels.hpp"

#include <algorithm>
#include <string>

namespace ccfpse {

LabelMap::LabelMap(int height, int width, int num_labels, std::int32_t fill)
    : LabelMap(height, width, num_labels,
               std::vector<std::int32_t>(static_cast<std::size_t>(std::max(0, height) * std::max(0, width)), fill)) {}

LabelMap::LabelMap(int height, int width, int num_labels, std::vector<std::int32_t> ids)
    : height_(height), width_(width), num_labels_(num_labels), ids_(std::move(ids)) {
  if (height <= 0 || width <= 0) throw DimensionError("label map extents must be positive");
  if (num_labels <= 0) throw ArgumentError("label map needs at least one label");
  if (ids_.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
    throw DimensionError("label map: id count does not match extents");
  }
  for (auto id : ids_) {
    if (id < 0 || id >= num_labels) {
      throw DataError("label id " + std::to_string(id) + " outside [0, " + std::to_string(num_labels) + ")");
    }
  }
}

void LabelMap::set(int i, int j, std::int32_t id) {
  if (id < 0 || id >= num_labels_) throw DataError("label id " + std::to_string(id) + " out of range");
  ids_[static_cast<std::size_t>(i * width_ + j)] = id;
}

LabelMap downsample_nearest(const LabelMap& map, int height, int width) {
  if (height <= 0 || width <= 0) throw DimensionError("downsample_nearest: extents must be positive");
  std::vector<std::int32_t> ids(static_cast<std::size_t>(height * width));
  for (int i = 0; i < height; ++i) {
    const int si = static_cast<int>(static_cast<std::int64_t>(i) * map.height() / height);
    for (int j = 0; j < width; ++j) {
      const int sj = static_cast<int>(static_cast<std::int64_t>(j) * map.width() / width);
      ids[static_cast<std::size_t>(i * width + j)] = map.at(si, sj);
    }
  }
  return LabelMap(height, width, map.num_labels(), std::move(ids));
}

template <typename T>
Tensor<T> one_hot(std::span<const LabelMap> maps) {
  if (maps.empty()) throw ArgumentError("one_hot: empty batch");
  const auto& first = maps.front();
  const std::int64_t n = static_cast<std::int64_t>(maps.size());
  const std::int64_t l = first.num_labels();
  const std::int64_t plane = static_cast<std::int64_t>(first.height()) * first.width();
  Tensor<T> out(Shape{n, l, first.height(), first.width()});
  auto values = out.mutable_data();
  for (std::int64_t s = 0; s < n; ++s) {
    const auto& m = maps[static_cast<std::size_t>(s)];
    if (m.height() != first.height() || m.width() != first.width() || m.num_labels() != first.num_labels()) {
      throw DimensionError("one_hot: label maps in a batch must share extents and label count");
    }
    const auto ids = m.ids();
    for (std::int64_t i = 0; i < plane; ++i) {
      values[static_cast<std::size_t>((s * l + ids[static_cast<std::size_t>(i)]) * plane + i)] = T{1};
    }
  }
  return out;
}

std::vector<std::int32_t> stack_ids(std::span<const LabelMap> maps) {
  std::vector<std::int32_t> out;
  for (const auto& m : maps) out.insert(out.end(), m.ids().begin(), m.ids().end());
  return out;
}

template Tensor<float> one_hot<float>(std::span<const LabelMap>);
template Tensor<double> one_hot<double>(std::span<const LabelMap>);

}  // namespace ccfpse
