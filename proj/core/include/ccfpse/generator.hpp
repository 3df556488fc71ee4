#pragma once

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "ccfpse/layers.hpp"
#include "ccfpse/tensor.hpp"

namespace ccfpse {

/// Spatially varying depthwise convolution with per-location kernels:
///
///   Y[c,i,j] = sum_{m,n} X[c, i+m-p, j+n-p] * V[c,m,n,i,j],   p = k/2,
///
/// zero-padded so the output keeps the input extents. `x` is [N,C,H,W] (or
/// [C,H,W]); `kernels` is [N,C,k,k,H,W] (or [C,k,k,H,W]). Differentiable in
/// both operands. Even k raises ArgumentError; extent mismatch DimensionError.
template <typename T>
Tensor<T> conditional_depthwise_conv(const Tensor<T>& x, const Tensor<T>& kernels);

/// Gated features Z = Y' * A (elementwise); shapes must match exactly.
template <typename T>
Tensor<T> conditional_attention(const Tensor<T>& features, const Tensor<T>& attention);

/// Layout-predicted weights for one conditional convolution block.
/// kernels: [N,C,k,k,H,W]; attention: [N,D,H,W] with entries in (0,1).
template <typename T>
struct PredictedWeights {
  int layer_id = -1;
  Tensor<T> kernels;
  Tensor<T> attention;
};

/// Layout-predicted per-location scale and shift ([N,C,H,W] each) for the
/// normalization-modulation block used by the modulation ablation arm.
template <typename T>
struct PredictedModulation {
  int layer_id = -1;
  Tensor<T> gamma;
  Tensor<T> beta;
};

template <typename T>
using BlockConditioning = std::variant<PredictedWeights<T>, PredictedModulation<T>>;

enum class GeneratorVariant { kConditionalConv, kModulation };

/// Whether each stage upsamples before (default) or after its block pair.
enum class StageOrder { kUpsampleFirst, kBlocksFirst };

struct GeneratorConfig {
  int z_channels = 64;
  /// widths[0] is the head width; stage s maps widths[s] -> widths[s+1].
  std::vector<int> widths{64, 64, 32, 16};
  int blocks_per_stage = 2;
  int kernel_size = 3;
  int out_channels = 3;
  int base_height = 4;
  int base_width = 4;
  double bn_momentum = 0.1;
  GeneratorVariant variant = GeneratorVariant::kConditionalConv;
  StageOrder stage_order = StageOrder::kUpsampleFirst;

  int stages() const { return static_cast<int>(widths.size()) - 1; }
  int output_height() const { return base_height << stages(); }
  int output_width() const { return base_width << stages(); }
  /// Throws ArgumentError on non-positive widths, even kernels, odd block counts.
  void validate() const;
};

/// Geometry of one conditional block. `level` indexes the layout pyramid:
/// level l has extents (output_height >> l, output_width >> l).
struct BlockSpec {
  int id = 0;
  int stage = 0;
  int in_channels = 0;
  int out_channels = 0;
  int height = 0;
  int width = 0;
  int level = 0;
};

std::vector<BlockSpec> block_layout(const GeneratorConfig& config);

/// Trainable parameters of one block.
template <typename T>
struct BlockParams {
  int layer_id = -1;
  BatchNormLayer<T> norm;
  Tensor<T> pointwise_weight;  // [D,C]      (conditional-conv variant)
  Tensor<T> pointwise_bias;    // [D]
  Conv2dLayer<T> conv;         // 3x3, C->D  (modulation variant)
};

/// batch_norm -> conditional_depthwise_conv -> pointwise_conv ->
/// conditional_attention -> leaky_relu(0.2).
template <typename T>
Tensor<T> cc_block(const Tensor<T>& x, const PredictedWeights<T>& weights, BlockParams<T>& params, Mode mode);

/// batch_norm (no affine) -> x * (1 + gamma) + beta -> conv3x3 -> leaky_relu(0.2).
template <typename T>
Tensor<T> modulation_block(const Tensor<T>& x, const PredictedModulation<T>& mod, BlockParams<T>& params,
                           Mode mode);

/// Noise map in, image in [-1,1] out:
///   head 1x1 conv -> stages of (2 conditional blocks + 2x nearest upsample,
///   with an additive skip around each block pair) -> 3x3 conv -> tanh.
template <typename T>
class Generator {
 public:
  Generator(GeneratorConfig config, std::uint64_t seed);

  /// `z` is [N, z_channels, base_height, base_width]; one conditioning bundle
  /// per block, in block_layout() order.
  Tensor<T> forward(const Tensor<T>& z, const std::vector<BlockConditioning<T>>& conditioning, Mode mode);

  /// One block pair with its skip connection (exposed for tests).
  Tensor<T> block_pair(int first_block, const Tensor<T>& x, const std::vector<BlockConditioning<T>>& conditioning,
                       Mode mode);

  const GeneratorConfig& config() const noexcept { return config_; }
  const std::vector<BlockSpec>& blocks() const noexcept { return layout_; }
  ParamStore<T>& params() noexcept { return store_; }
  const ParamStore<T>& params() const noexcept { return store_; }
  BlockParams<T>& block_params(int id) { return blocks_.at(static_cast<std::size_t>(id)); }

 private:
  Tensor<T> run_block(int id, const Tensor<T>& x, const BlockConditioning<T>& cond, Mode mode);

  GeneratorConfig config_;
  std::vector<BlockSpec> layout_;
  ParamStore<T> store_;
  Conv2dLayer<T> head_;
  std::vector<BlockParams<T>> blocks_;
  std::vector<std::optional<Conv2dLayer<T>>> skips_;  // one per block pair
  Conv2dLayer<T> to_image_;
};

/// Sizes of what a layout-conditioned layer must predict per sample.
struct ConditionalParamCount {
  std::int64_t kernel_count = 0;     // C*k*k*H*W
  std::int64_t attention_count = 0;  // D*H*W
  std::int64_t conditional = 0;      // kernels + attention
  std::int64_t naive = 0;            // D*C*k*k*H*W, a full spatially varying kernel
  double kernel_ratio = 0.0;         // naive / kernel_count, equals D
};

ConditionalParamCount count_conditional_params(std::int64_t c, std::int64_t d, std::int64_t k, std::int64_t h,
                                               std::int64_t w);

extern template class Generator<float>;
extern template class Generator<double>;

}  // namespace ccfpse
