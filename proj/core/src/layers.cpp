#include "ccfpse/layers.hpp"

#include <cmath>
#include <random>

#include "ccfpse/detail/autograd.hpp"
#include "ccfpse/ops.hpp"

namespace ccfpse {

using detail::image_dims;
using detail::ImageDims;
using detail::input_grad;
using detail::make_output;

const char* init_scheme_name(InitScheme scheme) {
  switch (scheme) {
    case InitScheme::kHeNormal:
      return "he_normal";
    case InitScheme::kEmbedding:
      return "embedding_normal_0.02";
    case InitScheme::kZeros:
      return "zeros";
    case InitScheme::kOnes:
      return "ones";
  }
  return "unknown";
}

template <typename T>
void ParamStore<T>::claim(const std::string& name) {
  if (index_.count(name)) throw ContractError("duplicate parameter name '" + name + "'");
}

template <typename T>
Tensor<T> ParamStore<T>::add(const std::string& name, Shape shape, InitScheme init, std::int64_t fan_in,
                             double scale) {
  claim(name);
  Tensor<T> t(std::move(shape), T{0}, true);
  index_[name] = {true, params_.size()};
  params_.push_back({name, t, init, fan_in, scale});
  return t;
}

template <typename T>
Tensor<T> ParamStore<T>::add_buffer(const std::string& name, Shape shape, T fill) {
  claim(name);
  Tensor<T> t(std::move(shape), fill, false);
  index_[name] = {false, buffers_.size()};
  buffers_.push_back({name, t, InitScheme::kZeros, 1, 1.0});
  return t;
}

template <typename T>
bool ParamStore<T>::contains(const std::string& name) const {
  return index_.count(name) != 0;
}

template <typename T>
const Tensor<T>& ParamStore<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("no parameter or buffer named '" + name + "'");
  const auto [is_param, i] = it->second;
  return is_param ? params_[i].tensor : buffers_[i].tensor;
}

template <typename T>
std::int64_t ParamStore<T>::total_param_count() const {
  return param_count("");
}

template <typename T>
std::int64_t ParamStore<T>::param_count(const std::string& prefix) const {
  std::int64_t n = 0;
  for (const auto& p : params_) {
    if (p.name.compare(0, prefix.size(), prefix) == 0) n += p.tensor.numel();
  }
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() const {
  for (const auto& p : params_) p.tensor.zero_grad();
}

template <typename T>
void ParamStore<T>::set_trainable(bool trainable) const {
  for (const auto& p : params_) p.tensor.set_requires_grad(trainable);
}

template <typename T>
void init_params(ParamStore<T>& store, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (const auto& p : store.params()) {
    auto values = p.tensor.mutable_data();
    switch (p.init) {
      case InitScheme::kHeNormal: {
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(p.fan_in)) * p.scale);
        for (auto& v : values) v = static_cast<T>(dist(rng));
        break;
      }
      case InitScheme::kEmbedding: {
        std::normal_distribution<double> dist(0.0, 0.02 * p.scale);
        for (auto& v : values) v = static_cast<T>(dist(rng));
        break;
      }
      case InitScheme::kZeros:
        std::fill(values.begin(), values.end(), T{0});
        break;
      case InitScheme::kOnes:
        std::fill(values.begin(), values.end(), T{1});
        break;
    }
  }
}

namespace {

/// Shared forward/backward for batch and instance normalization. Groups are
/// channels (batch norm) or (sample, channel) pairs (instance norm).
template <typename T>
Tensor<T> normalize(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, bool per_instance,
                    const std::vector<T>* fixed_mean, const std::vector<T>* fixed_var, T eps,
                    std::vector<T>* batch_mean, std::vector<T>* batch_var, const char* op) {
  const ImageDims d = image_dims(x.shape(), op);
  if (gamma.defined() && gamma.shape() != Shape{d.c}) throw DimensionError(std::string(op) + ": gamma must be [C]");
  if (beta.defined() && beta.shape() != Shape{d.c}) throw DimensionError(std::string(op) + ": beta must be [C]");
  if (d.n < 1) throw ArgumentError(std::string(op) + ": empty batch");
  const std::int64_t plane = d.plane();
  const std::int64_t groups = per_instance ? d.n * d.c : d.c;
  const std::int64_t count = per_instance ? plane : d.n * plane;
  auto group_of = [&](std::int64_t n, std::int64_t c) { return per_instance ? n * d.c + c : c; };

  const auto xs = x.data();
  std::vector<T> mean(static_cast<std::size_t>(groups), T{0});
  std::vector<T> var(static_cast<std::size_t>(groups), T{0});
  const bool use_batch = fixed_mean == nullptr;
  if (use_batch) {
    for (std::int64_t n = 0; n < d.n; ++n) {
      for (std::int64_t c = 0; c < d.c; ++c) {
        const T* p = xs.data() + (n * d.c + c) * plane;
        T s{0};
        for (std::int64_t i = 0; i < plane; ++i) s += p[i];
        mean[static_cast<std::size_t>(group_of(n, c))] += s;
      }
    }
    for (auto& m : mean) m /= static_cast<T>(count);
    for (std::int64_t n = 0; n < d.n; ++n) {
      for (std::int64_t c = 0; c < d.c; ++c) {
        const auto g = static_cast<std::size_t>(group_of(n, c));
        const T* p = xs.data() + (n * d.c + c) * plane;
        T s{0};
        for (std::int64_t i = 0; i < plane; ++i) {
          const T dv = p[i] - mean[g];
          s += dv * dv;
        }
        var[g] += s;
      }
    }
    for (auto& v : var) v /= static_cast<T>(count);
    if (batch_mean) *batch_mean = mean;
    if (batch_var) *batch_var = var;
  } else {
    mean = *fixed_mean;
    var = *fixed_var;
  }
  std::vector<T> inv_std(static_cast<std::size_t>(groups));
  for (std::size_t g = 0; g < inv_std.size(); ++g) inv_std[g] = T{1} / std::sqrt(var[g] + eps);

  const T* gs = gamma.defined() ? gamma.data().data() : nullptr;
  const T* bs = beta.defined() ? beta.data().data() : nullptr;
  std::vector<T> xhat(xs.size());
  std::vector<T> out(xs.size());
  for (std::int64_t n = 0; n < d.n; ++n) {
    for (std::int64_t c = 0; c < d.c; ++c) {
      const auto g = static_cast<std::size_t>(group_of(n, c));
      const std::int64_t base = (n * d.c + c) * plane;
      const T gm = gs ? gs[c] : T{1};
      const T bt = bs ? bs[c] : T{0};
      for (std::int64_t i = 0; i < plane; ++i) {
        const auto k = static_cast<std::size_t>(base + i);
        xhat[k] = (xs[k] - mean[g]) * inv_std[g];
        out[k] = gm * xhat[k] + bt;
      }
    }
  }

  auto backward = [d, per_instance, use_batch, groups, count, xhat = std::move(xhat),
                   inv_std = std::move(inv_std)](TensorNode<T>& self) {
    const std::int64_t plane = d.plane();
    auto group_of = [&](std::int64_t n, std::int64_t c) { return per_instance ? n * d.c + c : c; };
    T* gx = input_grad(self, 0);
    T* gg = input_grad(self, 1);
    T* gb = input_grad(self, 2);
    const auto& gamma_node = *self.inputs[1];
    const T* gs = gamma_node.data.empty() ? nullptr : gamma_node.data.data();
    const T* dy = self.grad.data();
    std::vector<T> sum_dxhat(static_cast<std::size_t>(groups), T{0});
    std::vector<T> sum_dxhat_xhat(static_cast<std::size_t>(groups), T{0});
    for (std::int64_t n = 0; n < d.n; ++n) {
      for (std::int64_t c = 0; c < d.c; ++c) {
        const auto g = static_cast<std::size_t>(group_of(n, c));
        const std::int64_t base = (n * d.c + c) * plane;
        const T gm = gs ? gs[c] : T{1};
        T s1{0}, s2{0}, sg{0}, sb{0};
        for (std::int64_t i = 0; i < plane; ++i) {
          const auto k = static_cast<std::size_t>(base + i);
          const T dxh = dy[k] * gm;
          s1 += dxh;
          s2 += dxh * xhat[k];
          sg += dy[k] * xhat[k];
          sb += dy[k];
        }
        sum_dxhat[g] += s1;
        sum_dxhat_xhat[g] += s2;
        if (gg) gg[c] += sg;
        if (gb) gb[c] += sb;
      }
    }
    if (!gx) return;
    const T inv_count = T{1} / static_cast<T>(count);
    for (std::int64_t n = 0; n < d.n; ++n) {
      for (std::int64_t c = 0; c < d.c; ++c) {
        const auto g = static_cast<std::size_t>(group_of(n, c));
        const std::int64_t base = (n * d.c + c) * plane;
        const T gm = gs ? gs[c] : T{1};
        const T m1 = sum_dxhat[g] * inv_count;
        const T m2 = sum_dxhat_xhat[g] * inv_count;
        for (std::int64_t i = 0; i < plane; ++i) {
          const auto k = static_cast<std::size_t>(base + i);
          const T dxh = dy[k] * gm;
          gx[k] += use_batch ? inv_std[g] * (dxh - m1 - xhat[k] * m2) : inv_std[g] * dxh;
        }
      }
    }
  };
  return make_output(x.shape(), std::move(out), op, {x, gamma, beta}, std::move(backward));
}

}  // namespace

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, Mode mode,
                     RunningStats<T>& stats, T eps) {
  if (mode == Mode::kEval) {
    if (!stats.count.defined() || stats.count.item() <= T{0}) {
      throw StateError("batch_norm: eval mode requires populated running statistics");
    }
    const auto m = stats.mean.data();
    const auto v = stats.var.data();
    std::vector<T> mean(m.begin(), m.end());
    std::vector<T> var(v.begin(), v.end());
    return normalize<T>(x, gamma, beta, false, &mean, &var, eps, nullptr, nullptr, "batch_norm");
  }
  std::vector<T> batch_mean;
  std::vector<T> batch_var;
  auto out = normalize<T>(x, gamma, beta, false, nullptr, nullptr, eps, &batch_mean, &batch_var, "batch_norm");
  if (stats.mean.defined()) {
    const ImageDims d = image_dims(x.shape(), "batch_norm");
    const double count = static_cast<double>(d.n * d.plane());
    const double unbias = count > 1 ? count / (count - 1) : 1.0;
    const T mom = static_cast<T>(stats.momentum);
    auto rm = stats.mean.mutable_data();
    auto rv = stats.var.mutable_data();
    for (std::size_t c = 0; c < rm.size(); ++c) {
      rm[c] = (T{1} - mom) * rm[c] + mom * batch_mean[c];
      rv[c] = (T{1} - mom) * rv[c] + mom * static_cast<T>(batch_var[c] * unbias);
    }
    stats.count.mutable_data()[0] += T{1};
  }
  return out;
}

template <typename T>
Tensor<T> instance_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  return normalize<T>(x, gamma, beta, true, nullptr, nullptr, eps, nullptr, nullptr, "instance_norm");
}

template <typename T>
Tensor<T> Conv2dLayer<T>::operator()(const Tensor<T>& x) const {
  return conv2d(x, weight, bias, stride, pad);
}

template <typename T>
Conv2dLayer<T> make_conv(ParamStore<T>& store, const std::string& name, std::int64_t in, std::int64_t out,
                         int kernel, int stride, double scale, bool with_bias) {
  Conv2dLayer<T> layer;
  layer.weight = store.add(name + ".weight", {out, in, kernel, kernel}, InitScheme::kHeNormal, in * kernel * kernel,
                           scale);
  if (with_bias) layer.bias = store.add(name + ".bias", {out}, InitScheme::kZeros);
  layer.stride = stride;
  layer.pad = kernel / 2;
  return layer;
}

template <typename T>
BatchNormLayer<T> make_batch_norm(ParamStore<T>& store, const std::string& name, std::int64_t channels,
                                  bool affine, double momentum) {
  BatchNormLayer<T> layer;
  if (affine) {
    layer.gamma = store.add(name + ".gamma", {channels}, InitScheme::kOnes);
    layer.beta = store.add(name + ".beta", {channels}, InitScheme::kZeros);
  }
  layer.stats.mean = store.add_buffer(name + ".running_mean", {channels}, T{0});
  layer.stats.var = store.add_buffer(name + ".running_var", {channels}, T{1});
  layer.stats.count = store.add_buffer(name + ".num_batches", {1}, T{0});
  layer.stats.momentum = momentum;
  return layer;
}

template <typename T>
InstanceNormLayer<T> make_instance_norm(ParamStore<T>& store, const std::string& name, std::int64_t channels) {
  InstanceNormLayer<T> layer;
  layer.gamma = store.add(name + ".gamma", {channels}, InitScheme::kOnes);
  layer.beta = store.add(name + ".beta", {channels}, InitScheme::kZeros);
  return layer;
}

template <typename T>
AdamState<T>::AdamState(const ParamStore<T>& store, AdamConfig cfg) : config(cfg) {
  for (const auto& p : store.params()) {
    m.emplace_back(p.tensor.shape(), T{0});
    v.emplace_back(p.tensor.shape(), T{0});
  }
}

template <typename T>
void adam_step(const ParamStore<T>& store, AdamState<T>& state) {
  const auto& params = store.params();
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ContractError("adam_step: optimizer state does not match the parameter store");
  }
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) throw ContractError("adam_step: parameter '" + p.name + "' has no gradient");
  }
  state.step += 1;
  const auto& cfg = state.config;
  const double t = static_cast<double>(state.step);
  const T lr = static_cast<T>(cfg.lr);
  const T b1 = static_cast<T>(cfg.beta1);
  const T b2 = static_cast<T>(cfg.beta2);
  const T eps = static_cast<T>(cfg.eps);
  const T c1 = static_cast<T>(1.0 - std::pow(cfg.beta1, t));
  const T c2 = static_cast<T>(1.0 - std::pow(cfg.beta2, t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto w = params[k].tensor.mutable_data();
    const auto g = params[k].tensor.grad();
    auto m = state.m[k].mutable_data();
    auto v = state.v[k].mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (T{1} - b1) * g[i];
      v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
      const T m_hat = m[i] / c1;
      const T v_hat = v[i] / c2;
      w[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

#define CCFPSE_INSTANTIATE_LAYERS(T)                                                                            \
  template class ParamStore<T>;                                                                                 \
  template void init_params<T>(ParamStore<T>&, std::uint64_t);                                                  \
  template Tensor<T> batch_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Mode, RunningStats<T>&, \
                                   T);                                                                          \
  template Tensor<T> instance_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);                 \
  template struct Conv2dLayer<T>;                                                                               \
  template Conv2dLayer<T> make_conv<T>(ParamStore<T>&, const std::string&, std::int64_t, std::int64_t, int, int, \
                                       double, bool);                                                           \
  template BatchNormLayer<T> make_batch_norm<T>(ParamStore<T>&, const std::string&, std::int64_t, bool, double); \
  template InstanceNormLayer<T> make_instance_norm<T>(ParamStore<T>&, const std::string&, std::int64_t);        \
  template struct AdamState<T>;                                                                                 \
  template void adam_step<T>(const ParamStore<T>&, AdamState<T>&);

CCFPSE_INSTANTIATE_LAYERS(float)
CCFPSE_INSTANTIATE_LAYERS(double)

}  // namespace ccfpse
