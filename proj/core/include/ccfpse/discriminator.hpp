#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ccfpse/labels.hpp"
#include "ccfpse/layers.hpp"

namespace ccfpse {

enum class DiscriminatorVariant {
  kFeaturePyramid,     // single-scale input, top-down merge, semantic embeddings
  kMultiScalePatch,    // two patch trunks at full and half scale, label concatenated to the input
};

struct DiscriminatorConfig {
  /// Output width of each stride-2 bottom-up stage. The last three stages
  /// feed the pyramid, so five stages give scores at 1/8, 1/16 and 1/32.
  std::vector<int> widths{32, 64, 64, 64, 64};
  int fpn_channels = 64;
  DiscriminatorVariant variant = DiscriminatorVariant::kFeaturePyramid;
  bool embeddings = true;
  /// Strided stages per trunk in the multi-scale patch variant.
  int patch_stages = 3;

  void validate() const;
};

/// Score maps are [N,1,h,w], finest scale first. `total` is [N]: the mean over
/// scales of (mean of P_i + mean of M_i). `features` are the intermediate
/// activations tapped by the feature-matching loss.
template <typename T>
struct DiscriminatorOutput {
  std::vector<Tensor<T>> patch_scores;
  std::vector<Tensor<T>> semantic_scores;
  Tensor<T> total;
  std::vector<Tensor<T>> features;
};

/// M[n,0,a,b] = sum_c F[n,c,a,b] * table[y_n(a,b), c], with each y_n
/// nearest-downsampled to the extents of F. DataError if an id has no row.
template <typename T>
Tensor<T> semantic_score(const Tensor<T>& features, std::span<const LabelMap> labels, const Tensor<T>& table);

template <typename T>
class Discriminator {
 public:
  Discriminator(DiscriminatorConfig config, int num_labels, int image_channels, std::uint64_t seed);

  /// `image` is [N, image_channels, H, W] with H, W divisible by 2^stages;
  /// one label map per sample at the image extents.
  DiscriminatorOutput<T> forward(const Tensor<T>& image, std::span<const LabelMap> labels) const;

  const DiscriminatorConfig& config() const noexcept { return config_; }
  int scales() const noexcept;
  /// Per-scale label embedding tables [num_labels, fpn_channels]; empty when
  /// embeddings are disabled or for the patch variant.
  const std::vector<Tensor<T>>& embedding_tables() const noexcept { return tables_; }
  ParamStore<T>& params() noexcept { return store_; }
  const ParamStore<T>& params() const noexcept { return store_; }

 private:
  struct Stage {
    Conv2dLayer<T> conv;
    InstanceNormLayer<T> norm;
    bool normalized = true;
  };
  struct Trunk {
    std::vector<Stage> stages;
    Conv2dLayer<T> head;
  };

  void check_inputs(const Tensor<T>& image, std::span<const LabelMap> labels) const;
  Tensor<T> run_stage(const Stage& stage, const Tensor<T>& x) const;
  DiscriminatorOutput<T> forward_pyramid(const Tensor<T>& image, std::span<const LabelMap> labels) const;
  DiscriminatorOutput<T> forward_patch(const Tensor<T>& image, std::span<const LabelMap> labels) const;

  DiscriminatorConfig config_;
  int num_labels_;
  int image_channels_;
  ParamStore<T> store_;
  std::vector<Stage> bottom_up_;
  std::vector<Conv2dLayer<T>> laterals_;
  std::vector<Stage> smooth_;
  std::vector<Conv2dLayer<T>> patch_heads_;
  std::vector<Tensor<T>> tables_;
  std::vector<Trunk> trunks_;
};

extern template class Discriminator<float>;
extern template class Discriminator<double>;

}  // namespace ccfpse
