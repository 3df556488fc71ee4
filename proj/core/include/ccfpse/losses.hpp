#pragma once

#include <cstdint>
#include <vector>

#include "ccfpse/layers.hpp"

namespace ccfpse {

struct LossWeights {
  double perceptual = 10.0;
  double feature_matching = 20.0;
};

/// mean(max(0, 1 - real)) + mean(max(0, 1 + fake)). Scores may be scalars or
/// per-sample [N] vectors.
template <typename T>
Tensor<T> d_hinge_loss(const Tensor<T>& score_real, const Tensor<T>& score_fake);

/// -mean(fake).
template <typename T>
Tensor<T> g_adv_loss(const Tensor<T>& score_fake);

/// Strided conv stack with frozen, seed-fixed random weights; stands in for a
/// pretrained classifier backbone. Each stage is conv3x3 stride 2 + leaky_relu.
template <typename T>
class FixedFeatureExtractor {
 public:
  explicit FixedFeatureExtractor(std::uint64_t seed, int in_channels = 3, std::vector<int> widths = {16, 32, 32, 32});

  /// One activation per stage, shallowest first.
  std::vector<Tensor<T>> features(const Tensor<T>& image) const;

  const ParamStore<T>& params() const noexcept { return store_; }

 private:
  ParamStore<T> store_;
  std::vector<Conv2dLayer<T>> stages_;
};

/// Mean over stages of mean |phi(fake) - phi(real)|. The real branch is
/// evaluated without recording, so gradients reach `fake` only.
template <typename T>
Tensor<T> perceptual_loss(const Tensor<T>& fake, const Tensor<T>& real, const FixedFeatureExtractor<T>& extractor);

/// Mean over layers of mean |fake_i - real_i|; `real` entries are detached.
/// ContractError if the lists differ in length.
template <typename T>
Tensor<T> feature_matching_loss(const std::vector<Tensor<T>>& fake, const std::vector<Tensor<T>>& real);

/// adv + lambda_P * perceptual + lambda_FM * fm. Undefined terms count as zero.
template <typename T>
Tensor<T> g_total_loss(const Tensor<T>& adv, const Tensor<T>& perceptual, const Tensor<T>& feature_matching,
                       const LossWeights& weights);

extern template class FixedFeatureExtractor<float>;
extern template class FixedFeatureExtractor<double>;

}  // namespace ccfpse
