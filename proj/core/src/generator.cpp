#include "ccfpse/generator.hpp"

#include <string>

#include "ccfpse/detail/autograd.hpp"
#include "ccfpse/ops.hpp"
#include "ccfpse/parallel.hpp"

namespace ccfpse {

using detail::input_grad;
using detail::make_output;

template <typename T>
Tensor<T> conditional_depthwise_conv(const Tensor<T>& x, const Tensor<T>& kernels) {
  const auto xd = detail::image_dims(x.shape(), "conditional_depthwise_conv");
  const int expected_rank = xd.batched ? 6 : 5;
  if (kernels.rank() != expected_rank) {
    throw DimensionError("conditional_depthwise_conv: kernels must be " +
                         std::string(xd.batched ? "[N,C,k,k,H,W]" : "[C,k,k,H,W]") + ", got " +
                         shape_string(kernels.shape()));
  }
  const int off = xd.batched ? 1 : 0;
  const std::int64_t k = kernels.dim(off + 1);
  if (kernels.dim(off + 2) != k) throw DimensionError("conditional_depthwise_conv: kernels must be square");
  if (k % 2 == 0) throw ArgumentError("conditional_depthwise_conv: kernel size must be odd");
  if ((xd.batched && kernels.dim(0) != xd.n) || kernels.dim(off) != xd.c || kernels.dim(off + 3) != xd.h ||
      kernels.dim(off + 4) != xd.w) {
    throw DimensionError("conditional_depthwise_conv: kernels " + shape_string(kernels.shape()) +
                         " do not match input " + shape_string(x.shape()));
  }
  const std::int64_t p = k / 2;
  const std::int64_t h = xd.h;
  const std::int64_t w = xd.w;
  const std::int64_t plane = h * w;
  const std::int64_t kk = k * k;
  const std::int64_t channels = xd.n * xd.c;

  // Visits every (output cell, tap) pair whose source lies inside the input.
  // fn(out_index, in_index, tap_plane_offset) over one channel plane.
  auto for_each_tap = [=](auto&& fn) {
    for (std::int64_t m = 0; m < k; ++m) {
      const std::int64_t dy = m - p;
      const std::int64_t i0 = std::max<std::int64_t>(0, -dy);
      const std::int64_t i1 = std::min<std::int64_t>(h, h - dy);
      for (std::int64_t q = 0; q < k; ++q) {
        const std::int64_t dx = q - p;
        const std::int64_t j0 = std::max<std::int64_t>(0, -dx);
        const std::int64_t j1 = std::min<std::int64_t>(w, w - dx);
        const std::int64_t tap = (m * k + q) * plane;
        for (std::int64_t i = i0; i < i1; ++i) {
          fn(i * w, (i + dy) * w + dx, tap, j0, j1);
        }
      }
    }
  };

  const auto xs = x.data();
  const auto vs = kernels.data();
  std::vector<T> out(static_cast<std::size_t>(channels * plane), T{0});
  parallel_for(channels, [&](std::int64_t nc) {
    const T* xc = xs.data() + nc * plane;
    const T* vc = vs.data() + nc * kk * plane;
    T* yc = out.data() + nc * plane;
    for_each_tap([&](std::int64_t orow, std::int64_t irow, std::int64_t tap, std::int64_t j0, std::int64_t j1) {
      const T* vrow = vc + tap + orow;
      const T* xrow = xc + irow;
      T* yrow = yc + orow;
      for (std::int64_t j = j0; j < j1; ++j) yrow[j] += xrow[j] * vrow[j];
    });
  });
  add_mac_count(channels * kk * plane);

  auto backward = [channels, plane, kk, for_each_tap](TensorNode<T>& self) {
    const T* xs = self.inputs[0]->data.data();
    const T* vs = self.inputs[1]->data.data();
    T* gx = input_grad(self, 0);
    T* gv = input_grad(self, 1);
    const T* gy = self.grad.data();
    parallel_for(channels, [&](std::int64_t nc) {
      const T* xc = xs + nc * plane;
      const T* vc = vs + nc * kk * plane;
      const T* gyc = gy + nc * plane;
      T* gxc = gx ? gx + nc * plane : nullptr;
      T* gvc = gv ? gv + nc * kk * plane : nullptr;
      for_each_tap([&](std::int64_t orow, std::int64_t irow, std::int64_t tap, std::int64_t j0, std::int64_t j1) {
        const T* g = gyc + orow;
        if (gxc) {
          const T* vrow = vc + tap + orow;
          T* dst = gxc + irow;
          for (std::int64_t j = j0; j < j1; ++j) dst[j] += g[j] * vrow[j];
        }
        if (gvc) {
          const T* xrow = xc + irow;
          T* dst = gvc + tap + orow;
          for (std::int64_t j = j0; j < j1; ++j) dst[j] += g[j] * xrow[j];
        }
      });
    });
  };
  return make_output(x.shape(), std::move(out), "conditional_depthwise_conv", {x, kernels}, std::move(backward));
}

template <typename T>
Tensor<T> conditional_attention(const Tensor<T>& features, const Tensor<T>& attention) {
  if (features.shape() != attention.shape()) {
    throw DimensionError("conditional_attention: features " + shape_string(features.shape()) +
                         " vs attention " + shape_string(attention.shape()));
  }
  return mul(features, attention);
}

void GeneratorConfig::validate() const {
  if (widths.size() < 2) throw ArgumentError("generator: need a head width and at least one stage");
  for (int w : widths) {
    if (w <= 0) throw ArgumentError("generator: widths must be positive");
  }
  if (z_channels <= 0 || out_channels <= 0) throw ArgumentError("generator: channel counts must be positive");
  if (kernel_size <= 0 || kernel_size % 2 == 0) throw ArgumentError("generator: kernel size must be odd");
  if (blocks_per_stage <= 0 || blocks_per_stage % 2 != 0) {
    throw ArgumentError("generator: blocks per stage must be a positive even number");
  }
  if (base_height <= 0 || base_width <= 0) throw ArgumentError("generator: base resolution must be positive");
}

std::vector<BlockSpec> block_layout(const GeneratorConfig& config) {
  config.validate();
  std::vector<BlockSpec> out;
  const int stages = config.stages();
  for (int s = 0; s < stages; ++s) {
    const int level = config.stage_order == StageOrder::kUpsampleFirst ? stages - s - 1 : stages - s;
    const int height = config.output_height() >> level;
    const int width = config.output_width() >> level;
    for (int b = 0; b < config.blocks_per_stage; ++b) {
      BlockSpec spec;
      spec.id = static_cast<int>(out.size());
      spec.stage = s;
      spec.in_channels = b == 0 ? config.widths[static_cast<std::size_t>(s)] : config.widths[static_cast<std::size_t>(s + 1)];
      spec.out_channels = config.widths[static_cast<std::size_t>(s + 1)];
      spec.height = height;
      spec.width = width;
      spec.level = level;
      out.push_back(spec);
    }
  }
  return out;
}

template <typename T>
Tensor<T> cc_block(const Tensor<T>& x, const PredictedWeights<T>& weights, BlockParams<T>& params, Mode mode) {
  if (weights.layer_id != params.layer_id) {
    throw ContractError("cc_block: weights for layer " + std::to_string(weights.layer_id) + " given to layer " +
                        std::to_string(params.layer_id));
  }
  auto h = params.norm(x, mode);
  h = conditional_depthwise_conv(h, weights.kernels);
  h = pointwise_conv(h, params.pointwise_weight, params.pointwise_bias);
  h = conditional_attention(h, weights.attention);
  return leaky_relu(h, T(0.2));
}

template <typename T>
Tensor<T> modulation_block(const Tensor<T>& x, const PredictedModulation<T>& mod, BlockParams<T>& params,
                           Mode mode) {
  if (mod.layer_id != params.layer_id) {
    throw ContractError("modulation_block: conditioning for layer " + std::to_string(mod.layer_id) +
                        " given to layer " + std::to_string(params.layer_id));
  }
  auto h = params.norm(x, mode);
  h = add(add(h, mul(h, mod.gamma)), mod.beta);
  h = params.conv(h);
  return leaky_relu(h, T(0.2));
}

template <typename T>
Generator<T>::Generator(GeneratorConfig config, std::uint64_t seed)
    : config_(std::move(config)), layout_(block_layout(config_)) {
  const int k = config_.kernel_size;
  head_ = make_conv(store_, "gen.head", config_.z_channels, config_.widths.front(), 1);
  const bool modulation = config_.variant == GeneratorVariant::kModulation;
  for (const auto& spec : layout_) {
    const std::string name = "gen.block" + std::to_string(spec.id);
    BlockParams<T> bp;
    bp.layer_id = spec.id;
    bp.norm = make_batch_norm(store_, name + ".norm", spec.in_channels, !modulation, config_.bn_momentum);
    if (modulation) {
      bp.conv = make_conv(store_, name + ".conv", spec.in_channels, spec.out_channels, k);
    } else {
      bp.pointwise_weight = store_.add(name + ".pointwise.weight", {spec.out_channels, spec.in_channels},
                                       InitScheme::kHeNormal, spec.in_channels);
      bp.pointwise_bias = store_.add(name + ".pointwise.bias", {spec.out_channels}, InitScheme::kZeros);
    }
    blocks_.push_back(std::move(bp));
  }
  for (std::size_t b = 0; b < layout_.size(); b += 2) {
    const auto& first = layout_[b];
    if (first.in_channels != layout_[b + 1].out_channels) {
      skips_.emplace_back(make_conv(store_, "gen.skip" + std::to_string(b / 2), first.in_channels,
                                    layout_[b + 1].out_channels, 1));
    } else {
      skips_.emplace_back(std::nullopt);
    }
  }
  to_image_ = make_conv(store_, "gen.to_image", config_.widths.back(), config_.out_channels, 3);
  init_params(store_, seed);
}

template <typename T>
Tensor<T> Generator<T>::run_block(int id, const Tensor<T>& x, const BlockConditioning<T>& cond, Mode mode) {
  auto& params = blocks_.at(static_cast<std::size_t>(id));
  if (config_.variant == GeneratorVariant::kModulation) {
    const auto* mod = std::get_if<PredictedModulation<T>>(&cond);
    if (!mod) throw ContractError("generator: modulation variant needs PredictedModulation conditioning");
    return modulation_block(x, *mod, params, mode);
  }
  const auto* weights = std::get_if<PredictedWeights<T>>(&cond);
  if (!weights) throw ContractError("generator: conditional-conv variant needs PredictedWeights conditioning");
  return cc_block(x, *weights, params, mode);
}

template <typename T>
Tensor<T> Generator<T>::block_pair(int first_block, const Tensor<T>& x,
                                   const std::vector<BlockConditioning<T>>& conditioning, Mode mode) {
  if (first_block % 2 != 0 || first_block + 1 >= static_cast<int>(layout_.size())) {
    throw ArgumentError("generator: block pairs start at even block ids");
  }
  auto h = run_block(first_block, x, conditioning.at(static_cast<std::size_t>(first_block)), mode);
  h = run_block(first_block + 1, h, conditioning.at(static_cast<std::size_t>(first_block + 1)), mode);
  const auto& skip = skips_[static_cast<std::size_t>(first_block / 2)];
  return add(h, skip ? (*skip)(x) : x);
}

template <typename T>
Tensor<T> Generator<T>::forward(const Tensor<T>& z, const std::vector<BlockConditioning<T>>& conditioning,
                                Mode mode) {
  if (conditioning.size() != layout_.size()) {
    throw ContractError("generator: expected " + std::to_string(layout_.size()) + " conditioning bundles, got " +
                        std::to_string(conditioning.size()));
  }
  if (z.rank() != 4 || z.dim(1) != config_.z_channels || z.dim(2) != config_.base_height ||
      z.dim(3) != config_.base_width) {
    throw DimensionError("generator: noise map must be [N," + std::to_string(config_.z_channels) + "," +
                         std::to_string(config_.base_height) + "," + std::to_string(config_.base_width) +
                         "], got " + shape_string(z.shape()));
  }
  const bool upsample_first = config_.stage_order == StageOrder::kUpsampleFirst;
  auto h = head_(z);
  const int per_stage = config_.blocks_per_stage;
  for (int s = 0; s < config_.stages(); ++s) {
    if (upsample_first) h = upsample_nearest(h, 2);
    for (int b = 0; b < per_stage; b += 2) h = block_pair(s * per_stage + b, h, conditioning, mode);
    if (!upsample_first) h = upsample_nearest(h, 2);
  }
  return tanh(to_image_(h));
}

ConditionalParamCount count_conditional_params(std::int64_t c, std::int64_t d, std::int64_t k, std::int64_t h,
                                               std::int64_t w) {
  if (c <= 0 || d <= 0 || k <= 0 || h <= 0 || w <= 0) throw ArgumentError("count_conditional_params: sizes must be positive");
  ConditionalParamCount out;
  out.kernel_count = c * k * k * h * w;
  out.attention_count = d * h * w;
  out.conditional = out.kernel_count + out.attention_count;
  out.naive = d * c * k * k * h * w;
  out.kernel_ratio = static_cast<double>(out.naive) / static_cast<double>(out.kernel_count);
  return out;
}

#define CCFPSE_INSTANTIATE_GENERATOR(T)                                                                        \
  template Tensor<T> conditional_depthwise_conv<T>(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> conditional_attention<T>(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> cc_block<T>(const Tensor<T>&, const PredictedWeights<T>&, BlockParams<T>&, Mode);         \
  template Tensor<T> modulation_block<T>(const Tensor<T>&, const PredictedModulation<T>&, BlockParams<T>&, Mode); \
  template class Generator<T>;

CCFPSE_INSTANTIATE_GENERATOR(float)
CCFPSE_INSTANTIATE_GENERATOR(double)

}  // namespace ccfpse
