#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "ccfpse/config.hpp"
#include "ccfpse/labels.hpp"
#include "ccfpse/tensor.hpp"

namespace ccfpse::testing {

template <typename T>
Tensor<T> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                        bool requires_grad = false) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<T> values(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : values) v = static_cast<T>(dist(rng));
  return Tensor<T>(std::move(shape), std::move(values), requires_grad);
}

inline LabelMap random_labels(int h, int w, int num_labels, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> dist(0, num_labels - 1);
  std::vector<std::int32_t> ids(static_cast<std::size_t>(h * w));
  for (auto& id : ids) id = dist(rng);
  return LabelMap(h, w, num_labels, std::move(ids));
}

template <typename T>
std::vector<T> values(const Tensor<T>& t) {
  return {t.data().begin(), t.data().end()};
}

/// Tiny model and data sizes so a training step takes milliseconds.
inline ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.data.task.height = 8;
  cfg.data.task.width = 8;
  cfg.data.task.num_labels = 3;
  cfg.data.task.min_extent = 2;
  cfg.data.task.max_extent = 5;
  cfg.data.train_count = 6;
  cfg.data.eval_count = 4;
  cfg.data.count = 6;
  cfg.generator.z_channels = 4;
  cfg.generator.widths = {8, 8, 4};
  cfg.generator.base_height = 2;
  cfg.generator.base_width = 2;
  cfg.weight_net.decoder_width = 8;
  cfg.weight_net.head_hidden = 8;
  cfg.discriminator.widths = {8, 8, 8};
  cfg.discriminator.fpn_channels = 8;
  cfg.train.batch_size = 2;
  cfg.train.steps = 3;
  cfg.train.checkpoint_every = 0;
  cfg.train.sample_every = 0;
  return cfg;
}

}  // namespace ccfpse::testing
