#include "ccfpse/weight_net.hpp"

#include <string>

#include "ccfpse/ops.hpp"

namespace ccfpse {

template <typename T>
WeightNet<T>::WeightNet(WeightNetConfig config, GeneratorConfig generator, int num_labels, std::uint64_t seed)
    : config_(std::move(config)),
      generator_(std::move(generator)),
      num_labels_(num_labels),
      layout_(block_layout(generator_)) {
  if (num_labels_ <= 0) throw ArgumentError("weight net: num_labels must be positive");
  const int stages = generator_.stages();
  if (config_.encoder_widths.empty()) {
    for (int l = 0; l <= stages; ++l) {
      config_.encoder_widths.push_back(generator_.widths[static_cast<std::size_t>(stages - l)]);
    }
  }
  if (static_cast<int>(config_.encoder_widths.size()) != stages + 1) {
    throw ArgumentError("weight net: need one encoder width per pyramid level (" + std::to_string(stages + 1) + ")");
  }
  if (config_.decoder_width <= 0 || config_.head_hidden <= 0 || config_.bottleneck_convs < 0) {
    throw ArgumentError("weight net: widths must be positive");
  }
  const bool pyramid = config_.predictor == PredictorKind::kFeaturePyramid;
  const auto& enc = config_.encoder_widths;
  if (pyramid) {
    for (int l = 0; l <= stages; ++l) {
      const int in = l == 0 ? num_labels_ : enc[static_cast<std::size_t>(l - 1)];
      encoder_.push_back(make_conv(store_, "wnet.enc" + std::to_string(l), in, enc[static_cast<std::size_t>(l)], 3,
                                   l == 0 ? 1 : 2));
    }
    for (int b = 0; b < config_.bottleneck_convs; ++b) {
      bottleneck_.push_back(make_conv(store_, "wnet.bottleneck" + std::to_string(b), enc.back(), enc.back(), 3));
    }
    for (int l = 0; l <= stages; ++l) {
      laterals_.push_back(
          make_conv(store_, "wnet.lateral" + std::to_string(l), enc[static_cast<std::size_t>(l)], config_.decoder_width, 1));
    }
  }
  const bool modulation = generator_.variant == GeneratorVariant::kModulation;
  const int head_in = pyramid ? config_.decoder_width + num_labels_ : num_labels_;
  const int second_kernel = pyramid ? 1 : 3;
  const int k = generator_.kernel_size;
  for (const auto& spec : layout_) {
    const std::string name = "wnet.head" + std::to_string(spec.id);
    const int primary_out = modulation ? spec.in_channels : spec.in_channels * k * k;
    const int secondary_out = modulation ? spec.in_channels : spec.out_channels;
    BlockHeads heads;
    heads.primary.first = make_conv(store_, name + ".primary.0", head_in, config_.head_hidden, 3);
    heads.primary.second =
        make_conv(store_, name + ".primary.1", config_.head_hidden, primary_out, second_kernel, 1, config_.head_scale);
    heads.secondary.first = make_conv(store_, name + ".secondary.0", head_in, config_.head_hidden, 3);
    heads.secondary.second = make_conv(store_, name + ".secondary.1", config_.head_hidden, secondary_out,
                                       second_kernel, 1, config_.head_scale);
    heads_.push_back(std::move(heads));
  }
  init_params(store_, seed);
}

template <typename T>
void WeightNet<T>::check_layout(std::span<const LabelMap> labels) const {
  if (labels.empty()) throw ArgumentError("weight net: empty label batch");
  const int factor = 1 << generator_.stages();
  for (const auto& m : labels) {
    if (m.height() % factor != 0 || m.width() % factor != 0) {
      throw ArgumentError("weight net: layout extents " + std::to_string(m.height()) + "x" +
                          std::to_string(m.width()) + " not divisible by " + std::to_string(factor));
    }
    if (m.height() != generator_.output_height() || m.width() != generator_.output_width()) {
      throw ArgumentError("weight net: layout extents do not match the generator output");
    }
    if (m.num_labels() != num_labels_) throw DataError("weight net: label count mismatch");
  }
}

template <typename T>
Tensor<T> WeightNet<T>::level_one_hot(std::span<const LabelMap> labels, int height, int width) const {
  std::vector<LabelMap> small;
  small.reserve(labels.size());
  for (const auto& m : labels) small.push_back(downsample_nearest(m, height, width));
  return one_hot<T>(small);
}

template <typename T>
PyramidLayoutFeatures<T> WeightNet<T>::encode_layout(std::span<const LabelMap> labels) const {
  if (config_.predictor != PredictorKind::kFeaturePyramid) {
    throw StateError("weight net: encode_layout needs the feature-pyramid predictor");
  }
  check_layout(labels);
  const int stages = generator_.stages();
  std::vector<Tensor<T>> enc;
  auto h = one_hot<T>(labels);
  for (int l = 0; l <= stages; ++l) {
    h = leaky_relu(encoder_[static_cast<std::size_t>(l)](h), T(0.2));
    enc.push_back(h);
  }
  for (const auto& conv : bottleneck_) enc.back() = leaky_relu(conv(enc.back()), T(0.2));

  PyramidLayoutFeatures<T> out;
  out.levels.resize(static_cast<std::size_t>(stages + 1));
  Tensor<T> top;
  for (int l = stages; l >= 0; --l) {
    auto merged = laterals_[static_cast<std::size_t>(l)](enc[static_cast<std::size_t>(l)]);
    if (top.defined()) merged = add(merged, upsample_nearest(top, 2));
    top = leaky_relu(merged, T(0.2));
    const int height = generator_.output_height() >> l;
    const int width = generator_.output_width() >> l;
    out.levels[static_cast<std::size_t>(l)] = concat_channels<T>({top, level_one_hot(labels, height, width)});
  }
  return out;
}

template <typename T>
const BlockSpec& WeightNet<T>::spec(int block_id) const {
  if (block_id < 0 || block_id >= static_cast<int>(layout_.size())) {
    throw ContractError("weight net: no block " + std::to_string(block_id));
  }
  return layout_[static_cast<std::size_t>(block_id)];
}

template <typename T>
const Tensor<T>& WeightNet<T>::level_input(const PyramidLayoutFeatures<T>& features, const BlockSpec& s) const {
  if (s.level >= static_cast<int>(features.levels.size())) {
    throw ContractError("weight net: feature pyramid has no level " + std::to_string(s.level));
  }
  const auto& f = features.levels[static_cast<std::size_t>(s.level)];
  if (f.rank() != 4 || f.dim(2) != s.height || f.dim(3) != s.width) {
    throw ContractError("weight net: level " + std::to_string(s.level) + " features " + shape_string(f.shape()) +
                        " do not match block resolution " + std::to_string(s.height) + "x" + std::to_string(s.width));
  }
  return f;
}

template <typename T>
Tensor<T> WeightNet<T>::run_head(const Head& head, const Tensor<T>& input) const {
  return head.second(leaky_relu(head.first(input), T(0.2)));
}

template <typename T>
PredictedWeights<T> WeightNet<T>::weights_from(const Tensor<T>& input, const BlockSpec& s) const {
  if (generator_.variant != GeneratorVariant::kConditionalConv) {
    throw StateError("weight net: kernel prediction needs the conditional-conv generator variant");
  }
  const auto& heads = heads_[static_cast<std::size_t>(s.id)];
  const std::int64_t n = input.dim(0);
  const std::int64_t k = generator_.kernel_size;
  PredictedWeights<T> out;
  out.layer_id = s.id;
  out.kernels = reshape(run_head(heads.primary, input), Shape{n, s.in_channels, k, k, s.height, s.width});
  out.attention = sigmoid(run_head(heads.secondary, input));
  return out;
}

template <typename T>
PredictedModulation<T> WeightNet<T>::modulation_from(const Tensor<T>& input, const BlockSpec& s) const {
  if (generator_.variant != GeneratorVariant::kModulation) {
    throw StateError("weight net: modulation prediction needs the modulation generator variant");
  }
  const auto& heads = heads_[static_cast<std::size_t>(s.id)];
  PredictedModulation<T> out;
  out.layer_id = s.id;
  out.gamma = run_head(heads.primary, input);
  out.beta = run_head(heads.secondary, input);
  return out;
}

template <typename T>
PredictedWeights<T> WeightNet<T>::predict_weights(const PyramidLayoutFeatures<T>& features, int block_id) const {
  const auto& s = spec(block_id);
  return weights_from(level_input(features, s), s);
}

template <typename T>
PredictedWeights<T> WeightNet<T>::predict_weights_local(std::span<const LabelMap> labels, int block_id) const {
  if (config_.predictor != PredictorKind::kLocal) {
    throw StateError("weight net: local prediction needs the local predictor");
  }
  check_layout(labels);
  const auto& s = spec(block_id);
  return weights_from(level_one_hot(labels, s.height, s.width), s);
}

template <typename T>
PredictedModulation<T> WeightNet<T>::predict_modulation(const PyramidLayoutFeatures<T>& features,
                                                        int block_id) const {
  const auto& s = spec(block_id);
  return modulation_from(level_input(features, s), s);
}

template <typename T>
PredictedModulation<T> WeightNet<T>::predict_modulation_local(std::span<const LabelMap> labels, int block_id) const {
  if (config_.predictor != PredictorKind::kLocal) {
    throw StateError("weight net: local prediction needs the local predictor");
  }
  check_layout(labels);
  const auto& s = spec(block_id);
  return modulation_from(level_one_hot(labels, s.height, s.width), s);
}

template <typename T>
std::vector<BlockConditioning<T>> WeightNet<T>::predict_all(std::span<const LabelMap> labels) const {
  const bool modulation = generator_.variant == GeneratorVariant::kModulation;
  std::vector<BlockConditioning<T>> out;
  out.reserve(layout_.size());
  if (config_.predictor == PredictorKind::kFeaturePyramid) {
    const auto features = encode_layout(labels);
    for (const auto& s : layout_) {
      if (modulation) {
        out.emplace_back(predict_modulation(features, s.id));
      } else {
        out.emplace_back(predict_weights(features, s.id));
      }
    }
  } else {
    for (const auto& s : layout_) {
      if (modulation) {
        out.emplace_back(predict_modulation_local(labels, s.id));
      } else {
        out.emplace_back(predict_weights_local(labels, s.id));
      }
    }
  }
  return out;
}

template class WeightNet<float>;
template class WeightNet<double>;

}  // namespace ccfpse
