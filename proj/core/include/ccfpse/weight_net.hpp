#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ccfpse/generator.hpp"
#include "ccfpse/labels.hpp"
#include "ccfpse/layers.hpp"

namespace ccfpse {

enum class PredictorKind {
  kFeaturePyramid,  // encoder-decoder over the full layout
  kLocal,           // two 3x3 convs on the downsampled layout (5x5 receptive field)
};

struct WeightNetConfig {
  /// Encoder width per pyramid level, finest first. Empty mirrors the
  /// generator widths (finest level gets the generator's last width).
  std::vector<int> encoder_widths;
  int decoder_width = 32;
  int head_hidden = 32;
  int bottleneck_convs = 2;
  /// Std multiplier for the last conv of every prediction head.
  double head_scale = 1.0;
  PredictorKind predictor = PredictorKind::kFeaturePyramid;
};

/// Decoder outputs, one per pyramid level (finest first), each concatenated
/// with the nearest-downsampled one-hot layout: [N, decoder_width + L, H>>l, W>>l].
template <typename T>
struct PyramidLayoutFeatures {
  std::vector<Tensor<T>> levels;
};

/// Layout-to-weights network shared by every conditional block: one
/// encoder-decoder trunk, separate two-layer heads per block.
template <typename T>
class WeightNet {
 public:
  WeightNet(WeightNetConfig config, GeneratorConfig generator, int num_labels, std::uint64_t seed);

  /// Bottom-up strided encoder, top-down nearest-upsample decoder with 1x1
  /// lateral additions. Returns L+1 levels. ArgumentError if the layout
  /// extents differ from the generator output or are not divisible by 2^L.
  PyramidLayoutFeatures<T> encode_layout(std::span<const LabelMap> labels) const;

  /// Kernel head (C*k*k channels, reshaped to [N,C,k,k,H,W]) and attention
  /// head (D channels through a sigmoid) for one block.
  PredictedWeights<T> predict_weights(const PyramidLayoutFeatures<T>& features, int block_id) const;

  /// Same contract from two 3x3 convs over the downsampled one-hot layout.
  PredictedWeights<T> predict_weights_local(std::span<const LabelMap> labels, int block_id) const;

  /// Per-location scale/shift for the modulation generator variant.
  PredictedModulation<T> predict_modulation(const PyramidLayoutFeatures<T>& features, int block_id) const;
  PredictedModulation<T> predict_modulation_local(std::span<const LabelMap> labels, int block_id) const;

  /// Conditioning for every block, according to the configured predictor and
  /// the generator variant.
  std::vector<BlockConditioning<T>> predict_all(std::span<const LabelMap> labels) const;

  const WeightNetConfig& config() const noexcept { return config_; }
  const std::vector<BlockSpec>& blocks() const noexcept { return layout_; }
  int levels() const noexcept { return generator_.stages() + 1; }
  ParamStore<T>& params() noexcept { return store_; }
  const ParamStore<T>& params() const noexcept { return store_; }

 private:
  struct Head {
    Conv2dLayer<T> first;
    Conv2dLayer<T> second;
  };
  struct BlockHeads {
    Head primary;    // kernels (or gamma)
    Head secondary;  // attention (or beta)
  };

  void check_layout(std::span<const LabelMap> labels) const;
  Tensor<T> level_one_hot(std::span<const LabelMap> labels, int height, int width) const;
  Tensor<T> run_head(const Head& head, const Tensor<T>& input) const;
  const BlockSpec& spec(int block_id) const;
  const Tensor<T>& level_input(const PyramidLayoutFeatures<T>& features, const BlockSpec& spec) const;
  PredictedWeights<T> weights_from(const Tensor<T>& input, const BlockSpec& spec) const;
  PredictedModulation<T> modulation_from(const Tensor<T>& input, const BlockSpec& spec) const;

  WeightNetConfig config_;
  GeneratorConfig generator_;
  int num_labels_;
  std::vector<BlockSpec> layout_;
  ParamStore<T> store_;
  std::vector<Conv2dLayer<T>> encoder_;
  std::vector<Conv2dLayer<T>> bottleneck_;
  std::vector<Conv2dLayer<T>> laterals_;
  std::vector<BlockHeads> heads_;
};

extern template class WeightNet<float>;
extern template class WeightNet<double>;

}  // namespace ccfpse
