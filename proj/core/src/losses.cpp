#include "ccfpse/losses.hpp"

#include <string>

#include "ccfpse/ops.hpp"

namespace ccfpse {

template <typename T>
Tensor<T> d_hinge_loss(const Tensor<T>& score_real, const Tensor<T>& score_fake) {
  auto real_term = mean(relu(add_scalar(scale(score_real, T(-1)), T(1))));
  auto fake_term = mean(relu(add_scalar(score_fake, T(1))));
  return add(real_term, fake_term);
}

template <typename T>
Tensor<T> g_adv_loss(const Tensor<T>& score_fake) {
  return scale(mean(score_fake), T(-1));
}

template <typename T>
FixedFeatureExtractor<T>::FixedFeatureExtractor(std::uint64_t seed, int in_channels, std::vector<int> widths) {
  if (in_channels <= 0 || widths.empty()) throw ArgumentError("feature extractor: needs channels and stages");
  int in = in_channels;
  for (std::size_t s = 0; s < widths.size(); ++s) {
    if (widths[s] <= 0) throw ArgumentError("feature extractor: widths must be positive");
    stages_.push_back(make_conv(store_, "extractor.stage" + std::to_string(s), in, widths[s], 3, 2));
    in = widths[s];
  }
  init_params(store_, seed);
  store_.set_trainable(false);
}

template <typename T>
std::vector<Tensor<T>> FixedFeatureExtractor<T>::features(const Tensor<T>& image) const {
  std::vector<Tensor<T>> out;
  auto h = image;
  for (const auto& stage : stages_) {
    h = leaky_relu(stage(h), T(0.2));
    out.push_back(h);
  }
  return out;
}

template <typename T>
Tensor<T> perceptual_loss(const Tensor<T>& fake, const Tensor<T>& real, const FixedFeatureExtractor<T>& extractor) {
  if (fake.shape() != real.shape()) {
    throw DimensionError("perceptual_loss: " + shape_string(fake.shape()) + " vs " + shape_string(real.shape()));
  }
  std::vector<Tensor<T>> target;
  {
    NoGradGuard guard;
    target = extractor.features(real);
  }
  const auto pred = extractor.features(fake);
  Tensor<T> total;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    auto term = mean(abs(sub(pred[i], target[i])));
    total = total.defined() ? add(total, term) : term;
  }
  return scale(total, T(1) / static_cast<T>(pred.size()));
}

template <typename T>
Tensor<T> feature_matching_loss(const std::vector<Tensor<T>>& fake, const std::vector<Tensor<T>>& real) {
  if (fake.size() != real.size()) {
    throw ContractError("feature_matching_loss: " + std::to_string(fake.size()) + " fake layers vs " +
                        std::to_string(real.size()) + " real layers");
  }
  if (fake.empty()) throw ContractError("feature_matching_loss: no layers");
  Tensor<T> total;
  for (std::size_t i = 0; i < fake.size(); ++i) {
    auto term = mean(abs(sub(fake[i], real[i].detach())));
    total = total.defined() ? add(total, term) : term;
  }
  return scale(total, T(1) / static_cast<T>(fake.size()));
}

template <typename T>
Tensor<T> g_total_loss(const Tensor<T>& adv, const Tensor<T>& perceptual, const Tensor<T>& feature_matching,
                       const LossWeights& weights) {
  if (weights.perceptual < 0 || weights.feature_matching < 0) {
    throw ArgumentError("g_total_loss: loss weights must be non-negative");
  }
  auto total = adv;
  if (perceptual.defined()) total = add(total, scale(perceptual, static_cast<T>(weights.perceptual)));
  if (feature_matching.defined()) {
    total = add(total, scale(feature_matching, static_cast<T>(weights.feature_matching)));
  }
  return total;
}

#define CCFPSE_INSTANTIATE_LOSSES(T)                                                                           \
  template Tensor<T> d_hinge_loss<T>(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> g_adv_loss<T>(const Tensor<T>&);                                                          \
  template class FixedFeatureExtractor<T>;                                                                     \
  template Tensor<T> perceptual_loss<T>(const Tensor<T>&, const Tensor<T>&, const FixedFeatureExtractor<T>&); \
  template Tensor<T> feature_matching_loss<T>(const std::vector<Tensor<T>>&, const std::vector<Tensor<T>>&);  \
  template Tensor<T> g_total_loss<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const LossWeights&);

CCFPSE_INSTANTIATE_LOSSES(float)
CCFPSE_INSTANTIATE_LOSSES(double)

}  // namespace ccfpse
