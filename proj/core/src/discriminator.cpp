#include "ccfpse/discriminator.hpp"

#include <string>

#include "ccfpse/ops.hpp"

namespace ccfpse {

namespace {

constexpr int kPyramidScales = 3;

std::vector<LabelMap> downsample_all(std::span<const LabelMap> labels, std::int64_t h, std::int64_t w) {
  std::vector<LabelMap> out;
  out.reserve(labels.size());
  for (const auto& m : labels) out.push_back(downsample_nearest(m, static_cast<int>(h), static_cast<int>(w)));
  return out;
}

}  // namespace

void DiscriminatorConfig::validate() const {
  for (int w : widths) {
    if (w <= 0) throw ArgumentError("discriminator: widths must be positive");
  }
  if (fpn_channels <= 0) throw ArgumentError("discriminator: fpn_channels must be positive");
  if (variant == DiscriminatorVariant::kFeaturePyramid && static_cast<int>(widths.size()) < kPyramidScales) {
    throw ArgumentError("discriminator: need at least " + std::to_string(kPyramidScales) + " bottom-up stages");
  }
  if (variant == DiscriminatorVariant::kMultiScalePatch &&
      (patch_stages <= 0 || patch_stages > static_cast<int>(widths.size()))) {
    throw ArgumentError("discriminator: patch_stages must be in [1, widths.size()]");
  }
}

template <typename T>
Tensor<T> semantic_score(const Tensor<T>& features, std::span<const LabelMap> labels, const Tensor<T>& table) {
  if (features.rank() != 4) throw DimensionError("semantic_score: features must be [N,C,H,W]");
  if (table.rank() != 2 || table.dim(1) != features.dim(1)) {
    throw DimensionError("semantic_score: table " + shape_string(table.shape()) + " does not match features " +
                         shape_string(features.shape()));
  }
  if (static_cast<std::int64_t>(labels.size()) != features.dim(0)) {
    throw DimensionError("semantic_score: one label map per sample required");
  }
  const auto h = features.dim(2);
  const auto w = features.dim(3);
  const auto small = downsample_all(labels, h, w);
  const auto ids = stack_ids(small);
  return channel_dot(features, embedding_lookup(table, ids, features.dim(0), h, w));
}

template <typename T>
Discriminator<T>::Discriminator(DiscriminatorConfig config, int num_labels, int image_channels, std::uint64_t seed)
    : config_(std::move(config)), num_labels_(num_labels), image_channels_(image_channels) {
  config_.validate();
  if (num_labels_ <= 0 || image_channels_ <= 0) {
    throw ArgumentError("discriminator: num_labels and image_channels must be positive");
  }
  const auto& widths = config_.widths;
  if (config_.variant == DiscriminatorVariant::kFeaturePyramid) {
    int in = image_channels_;
    for (std::size_t s = 0; s < widths.size(); ++s) {
      const std::string name = "disc.down" + std::to_string(s);
      Stage stage;
      stage.conv = make_conv(store_, name + ".conv", in, widths[s], 3, 2);
      stage.normalized = s > 0;
      if (stage.normalized) stage.norm = make_instance_norm(store_, name + ".norm", widths[s]);
      bottom_up_.push_back(std::move(stage));
      in = widths[s];
    }
    const std::size_t first = widths.size() - kPyramidScales;
    for (int i = 0; i < kPyramidScales; ++i) {
      const std::string suffix = std::to_string(i);
      laterals_.push_back(make_conv(store_, "disc.lateral" + suffix, widths[first + static_cast<std::size_t>(i)],
                                    config_.fpn_channels, 1));
      Stage smooth;
      smooth.conv = make_conv(store_, "disc.smooth" + suffix + ".conv", config_.fpn_channels, config_.fpn_channels, 3);
      smooth.norm = make_instance_norm(store_, "disc.smooth" + suffix + ".norm", config_.fpn_channels);
      smooth_.push_back(std::move(smooth));
      patch_heads_.push_back(make_conv(store_, "disc.patch" + suffix, config_.fpn_channels, 1, 1));
      if (config_.embeddings) {
        tables_.push_back(store_.add("disc.embed" + suffix, {num_labels_, config_.fpn_channels},
                                     InitScheme::kEmbedding));
      }
    }
  } else {
    for (int t = 0; t < 2; ++t) {
      const std::string prefix = "disc.scale" + std::to_string(t);
      Trunk trunk;
      int in = image_channels_ + num_labels_;
      for (int s = 0; s < config_.patch_stages; ++s) {
        const std::string name = prefix + ".down" + std::to_string(s);
        const int out = widths[static_cast<std::size_t>(s)];
        Stage stage;
        stage.conv = make_conv(store_, name + ".conv", in, out, 3, 2);
        stage.normalized = s > 0;
        if (stage.normalized) stage.norm = make_instance_norm(store_, name + ".norm", out);
        trunk.stages.push_back(std::move(stage));
        in = out;
      }
      trunk.head = make_conv(store_, prefix + ".head", in, 1, 3);
      trunks_.push_back(std::move(trunk));
    }
  }
  init_params(store_, seed);
}

template <typename T>
int Discriminator<T>::scales() const noexcept {
  return config_.variant == DiscriminatorVariant::kFeaturePyramid ? kPyramidScales : 2;
}

template <typename T>
void Discriminator<T>::check_inputs(const Tensor<T>& image, std::span<const LabelMap> labels) const {
  if (image.rank() != 4 || image.dim(1) != image_channels_) {
    throw DimensionError("discriminator: image must be [N," + std::to_string(image_channels_) + ",H,W], got " +
                         shape_string(image.shape()));
  }
  const int depth = config_.variant == DiscriminatorVariant::kFeaturePyramid
                        ? static_cast<int>(config_.widths.size())
                        : config_.patch_stages + 1;
  const std::int64_t factor = std::int64_t{1} << depth;
  if (image.dim(2) % factor != 0 || image.dim(3) % factor != 0) {
    throw ArgumentError("discriminator: image extents " + std::to_string(image.dim(2)) + "x" +
                        std::to_string(image.dim(3)) + " not divisible by " + std::to_string(factor));
  }
  if (static_cast<std::int64_t>(labels.size()) != image.dim(0)) {
    throw DimensionError("discriminator: one label map per image required");
  }
  for (const auto& m : labels) {
    if (m.height() != image.dim(2) || m.width() != image.dim(3)) {
      throw DimensionError("discriminator: label map extents differ from the image");
    }
    if (m.num_labels() != num_labels_) throw DataError("discriminator: label count mismatch");
  }
}

template <typename T>
Tensor<T> Discriminator<T>::run_stage(const Stage& stage, const Tensor<T>& x) const {
  auto h = stage.conv(x);
  // A 1x1 plane normalizes to exactly beta, which would erase the signal.
  if (stage.normalized && h.dim(2) * h.dim(3) > 1) h = stage.norm(h);
  return leaky_relu(h, T(0.2));
}

template <typename T>
DiscriminatorOutput<T> Discriminator<T>::forward(const Tensor<T>& image, std::span<const LabelMap> labels) const {
  check_inputs(image, labels);
  return config_.variant == DiscriminatorVariant::kFeaturePyramid ? forward_pyramid(image, labels)
                                                                  : forward_patch(image, labels);
}

template <typename T>
DiscriminatorOutput<T> Discriminator<T>::forward_pyramid(const Tensor<T>& image,
                                                         std::span<const LabelMap> labels) const {
  DiscriminatorOutput<T> out;
  std::vector<Tensor<T>> bottom;
  auto h = image;
  for (const auto& stage : bottom_up_) {
    h = run_stage(stage, h);
    bottom.push_back(h);
    out.features.push_back(h);
  }
  const std::size_t first = bottom.size() - kPyramidScales;
  std::vector<Tensor<T>> merged(kPyramidScales);
  for (int i = kPyramidScales - 1; i >= 0; --i) {
    auto m = laterals_[static_cast<std::size_t>(i)](bottom[first + static_cast<std::size_t>(i)]);
    if (i + 1 < kPyramidScales) m = add(m, upsample_nearest(merged[static_cast<std::size_t>(i + 1)], 2));
    merged[static_cast<std::size_t>(i)] = m;
  }

  Tensor<T> total;
  for (int i = 0; i < kPyramidScales; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const auto f = run_stage(smooth_[idx], merged[idx]);
    out.features.push_back(f);
    auto p = patch_heads_[idx](f);
    auto scale_score = sample_mean(p);
    out.patch_scores.push_back(p);
    if (config_.embeddings) {
      auto m = semantic_score(f, labels, tables_[idx]);
      scale_score = add(scale_score, sample_mean(m));
      out.semantic_scores.push_back(m);
    }
    total = total.defined() ? add(total, scale_score) : scale_score;
  }
  out.total = scale(total, T(1) / T(kPyramidScales));
  return out;
}

template <typename T>
DiscriminatorOutput<T> Discriminator<T>::forward_patch(const Tensor<T>& image, std::span<const LabelMap> labels) const {
  DiscriminatorOutput<T> out;
  Tensor<T> total;
  auto x = image;
  for (std::size_t t = 0; t < trunks_.size(); ++t) {
    if (t > 0) x = avg_pool(x, 2);
    const auto layout = downsample_all(labels, x.dim(2), x.dim(3));
    auto h = concat_channels<T>({x, one_hot<T>(layout)});
    for (const auto& stage : trunks_[t].stages) {
      h = run_stage(stage, h);
      out.features.push_back(h);
    }
    auto p = trunks_[t].head(h);
    out.patch_scores.push_back(p);
    const auto s = sample_mean(p);
    total = total.defined() ? add(total, s) : s;
  }
  out.total = scale(total, T(1) / static_cast<T>(trunks_.size()));
  return out;
}

template Tensor<float> semantic_score<float>(const Tensor<float>&, std::span<const LabelMap>, const Tensor<float>&);
template Tensor<double> semantic_score<double>(const Tensor<double>&, std::span<const LabelMap>,
                                               const Tensor<double>&);
template class Discriminator<float>;
template class Discriminator<double>;

}  // namespace ccfpse
