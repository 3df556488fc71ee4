#include "ccfpse/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>

#include "ccfpse/detail/autograd.hpp"
#include "ccfpse/parallel.hpp"

namespace ccfpse {

namespace detail {

ImageDims image_dims(const Shape& shape, const char* op) {
  ImageDims d;
  if (shape.size() == 4) {
    d.batched = true;
    d.n = shape[0];
    d.c = shape[1];
    d.h = shape[2];
    d.w = shape[3];
  } else if (shape.size() == 3) {
    d.c = shape[0];
    d.h = shape[1];
    d.w = shape[2];
  } else {
    throw DimensionError(std::string(op) + ": expected [C,H,W] or [N,C,H,W], got " + shape_string(shape));
  }
  return d;
}

}  // namespace detail

using detail::BackwardFn;
using detail::image_dims;
using detail::ImageDims;
using detail::input_grad;
using detail::make_output;

namespace {

std::atomic<std::int64_t> g_macs{0};

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
  }
}

struct ConvGeometry {
  std::int64_t c, h, w, d, k, stride, pad, ho, wo;

  std::int64_t patch() const { return c * k * k; }
  std::int64_t out_plane() const { return ho * wo; }
  bool direct() const { return k == 1 && stride == 1 && pad == 0; }
};

template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* cols) {
  const auto plane = g.out_plane();
  for (std::int64_t c = 0; c < g.c; ++c) {
    const T* xc = x + c * g.h * g.w;
    for (std::int64_t m = 0; m < g.k; ++m) {
      for (std::int64_t n = 0; n < g.k; ++n) {
        T* dst = cols + ((c * g.k + m) * g.k + n) * plane;
        for (std::int64_t oy = 0; oy < g.ho; ++oy) {
          const std::int64_t iy = oy * g.stride + m - g.pad;
          T* row = dst + oy * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill(row, row + g.wo, T{0});
            continue;
          }
          const T* src = xc + iy * g.w;
          for (std::int64_t ox = 0; ox < g.wo; ++ox) {
            const std::int64_t ix = ox * g.stride + n - g.pad;
            row[ox] = (ix >= 0 && ix < g.w) ? src[ix] : T{0};
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* dx) {
  const auto plane = g.out_plane();
  for (std::int64_t c = 0; c < g.c; ++c) {
    T* dxc = dx + c * g.h * g.w;
    for (std::int64_t m = 0; m < g.k; ++m) {
      for (std::int64_t n = 0; n < g.k; ++n) {
        const T* src = cols + ((c * g.k + m) * g.k + n) * plane;
        for (std::int64_t oy = 0; oy < g.ho; ++oy) {
          const std::int64_t iy = oy * g.stride + m - g.pad;
          if (iy < 0 || iy >= g.h) continue;
          T* row = dxc + iy * g.w;
          const T* s = src + oy * g.wo;
          for (std::int64_t ox = 0; ox < g.wo; ++ox) {
            const std::int64_t ix = ox * g.stride + n - g.pad;
            if (ix >= 0 && ix < g.w) row[ix] += s[ox];
          }
        }
      }
    }
  }
}

template <typename T>
Tensor<T> conv_impl(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, std::int64_t k,
                    int stride, int pad, const char* op) {
  const ImageDims xd = image_dims(x.shape(), op);
  const std::int64_t d = weight.dim(0);
  if (weight.dim(1) != xd.c) {
    throw DimensionError(std::string(op) + ": weight expects " + std::to_string(weight.dim(1)) +
                         " input channels, input has " + std::to_string(xd.c));
  }
  if (bias.defined() && bias.shape() != Shape{d}) {
    throw DimensionError(std::string(op) + ": bias shape " + shape_string(bias.shape()) + " does not match " +
                         std::to_string(d) + " output channels");
  }
  if (stride < 1) throw ArgumentError(std::string(op) + ": stride must be >= 1");
  if (pad < 0) throw ArgumentError(std::string(op) + ": pad must be >= 0");
  if (k > xd.h + 2 * pad || k > xd.w + 2 * pad) {
    throw ArgumentError(std::string(op) + ": kernel larger than padded input");
  }
  const ConvGeometry g{xd.c, xd.h, xd.w, d, k, stride, pad, (xd.h + 2 * pad - k) / stride + 1,
                       (xd.w + 2 * pad - k) / stride + 1};
  const auto n_samples = xd.n;
  std::vector<T> out(static_cast<std::size_t>(n_samples * d * g.out_plane()));
  {
    const T* xs = x.data().data();
    const T* ws = weight.data().data();
    const T* bs = bias.defined() ? bias.data().data() : nullptr;
    ConstMatMap<T> wm(ws, d, g.patch());
    parallel_for(n_samples, [&](std::int64_t n) {
      const T* xn = xs + n * xd.sample();
      std::vector<T> buffer;
      const T* cols = xn;
      if (!g.direct()) {
        buffer.resize(static_cast<std::size_t>(g.patch() * g.out_plane()));
        im2col(xn, g, buffer.data());
        cols = buffer.data();
      }
      MatMap<T> o(out.data() + n * d * g.out_plane(), d, g.out_plane());
      o.noalias() = wm * ConstMatMap<T>(cols, g.patch(), g.out_plane());
      if (bs) {
        for (std::int64_t j = 0; j < d; ++j) o.row(j).array() += bs[j];
      }
    });
  }
  add_mac_count(n_samples * d * g.patch() * g.out_plane());

  BackwardFn<T> backward = [g, n_samples, sample = xd.sample()](TensorNode<T>& self) {
    const T* xs = self.inputs[0]->data.data();
    const T* ws = self.inputs[1]->data.data();
    T* gx = input_grad(self, 0);
    T* gw = input_grad(self, 1);
    T* gb = input_grad(self, 2);
    const std::int64_t wsize = g.d * g.patch();
    std::vector<T> wpart(gw ? static_cast<std::size_t>(n_samples * wsize) : 0);
    std::vector<T> bpart(gb ? static_cast<std::size_t>(n_samples * g.d) : 0);
    ConstMatMap<T> wm(ws, g.d, g.patch());
    const T* gy = self.grad.data();
    parallel_for(n_samples, [&](std::int64_t n) {
      ConstMatMap<T> dy(gy + n * g.d * g.out_plane(), g.d, g.out_plane());
      if (gx) {
        if (g.direct()) {
          MatMap<T>(gx + n * sample, g.c, g.out_plane()).noalias() += wm.transpose() * dy;
        } else {
          RowMat<T> dcols = wm.transpose() * dy;
          col2im_add(dcols.data(), g, gx + n * sample);
        }
      }
      if (gw) {
        const T* xn = xs + n * sample;
        std::vector<T> buffer;
        const T* cols = xn;
        if (!g.direct()) {
          buffer.resize(static_cast<std::size_t>(g.patch() * g.out_plane()));
          im2col(xn, g, buffer.data());
          cols = buffer.data();
        }
        MatMap<T>(wpart.data() + n * wsize, g.d, g.patch()).noalias() =
            dy * ConstMatMap<T>(cols, g.patch(), g.out_plane()).transpose();
      }
      if (gb) {
        // Plain loop: Eigen's vectorized sum peels by pointer alignment, which varies between runs.
        for (std::int64_t j = 0; j < g.d; ++j) {
          const T* row = gy + (n * g.d + j) * g.out_plane();
          T acc{0};
          for (std::int64_t i = 0; i < g.out_plane(); ++i) acc += row[i];
          bpart[static_cast<std::size_t>(n * g.d + j)] = acc;
        }
      }
    });
    // Fixed-order reduction keeps results independent of the worker count.
    for (std::int64_t n = 0; n < n_samples; ++n) {
      if (gw) {
        const T* p = wpart.data() + n * wsize;
        for (std::int64_t i = 0; i < wsize; ++i) gw[i] += p[i];
      }
      if (gb) {
        const T* p = bpart.data() + n * g.d;
        for (std::int64_t i = 0; i < g.d; ++i) gb[i] += p[i];
      }
    }
  };
  return make_output(xd.with(d, g.ho, g.wo), std::move(out), op, {x, weight, bias}, std::move(backward));
}

template <typename T, typename F, typename DF>
Tensor<T> unary(const Tensor<T>& x, const char* op, F f, DF df) {
  const auto xs = x.data();
  std::vector<T> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = f(xs[i]);
  return make_output(x.shape(), std::move(out), op, {x}, [df](TensorNode<T>& self) {
    T* gx = input_grad(self, 0);
    if (!gx) return;
    const auto& xin = self.inputs[0]->data;
    for (std::size_t i = 0; i < xin.size(); ++i) gx[i] += self.grad[i] * df(xin[i], self.data[i]);
  });
}

}  // namespace

std::int64_t mac_count() { return g_macs.load(std::memory_order_relaxed); }
void reset_mac_count() { g_macs.store(0, std::memory_order_relaxed); }
void add_mac_count(std::int64_t macs) { g_macs.fetch_add(macs, std::memory_order_relaxed); }

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride, int pad) {
  if (weight.rank() != 4 || weight.dim(2) != weight.dim(3)) {
    throw DimensionError("conv2d: weight must be [D,C,k,k], got " + shape_string(weight.shape()));
  }
  return conv_impl(x, weight, bias, weight.dim(2), stride, pad, "conv2d");
}

template <typename T>
Tensor<T> pointwise_conv(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (weight.rank() != 2) {
    throw DimensionError("pointwise_conv: weight must be [D,C], got " + shape_string(weight.shape()));
  }
  return conv_impl(x, weight, bias, 1, 1, 0, "pointwise_conv");
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  const auto as = a.data();
  const auto bs = b.data();
  std::vector<T> out(as.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = as[i] + bs[i];
  return make_output(a.shape(), std::move(out), "add", {a, b}, [](TensorNode<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (T* g = input_grad(self, k)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  const auto as = a.data();
  const auto bs = b.data();
  std::vector<T> out(as.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = as[i] - bs[i];
  return make_output(a.shape(), std::move(out), "sub", {a, b}, [](TensorNode<T>& self) {
    if (T* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (T* g = input_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  const auto as = a.data();
  const auto bs = b.data();
  std::vector<T> out(as.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = as[i] * bs[i];
  return make_output(a.shape(), std::move(out), "mul", {a, b}, [](TensorNode<T>& self) {
    const auto& av = self.inputs[0]->data;
    const auto& bv = self.inputs[1]->data;
    if (T* g = input_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (T* g = input_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return unary(x, "scale", [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T value) {
  return unary(x, "add_scalar", [value](T v) { return v + value; }, [](T, T) { return T{1}; });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T negative_slope) {
  return unary(
      x, "leaky_relu", [negative_slope](T v) { return v >= T{0} ? v : v * negative_slope; },
      [negative_slope](T v, T) { return v >= T{0} ? T{1} : negative_slope; });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return leaky_relu(x, T{0});
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary(
      x, "sigmoid", [](T v) { return T{1} / (T{1} + std::exp(-v)); }, [](T, T y) { return y * (T{1} - y); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return unary(x, "tanh", [](T v) { return std::tanh(v); }, [](T, T y) { return T{1} - y * y; });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  return unary(
      x, "abs", [](T v) { return std::abs(v); },
      [](T v, T) { return v > T{0} ? T{1} : (v < T{0} ? T{-1} : T{0}); });
}

template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& x, int factor) {
  if (factor < 1) throw ArgumentError("upsample_nearest: factor must be >= 1");
  const ImageDims d = image_dims(x.shape(), "upsample_nearest");
  const std::int64_t f = factor;
  const std::int64_t oh = d.h * f;
  const std::int64_t ow = d.w * f;
  const auto xs = x.data();
  std::vector<T> out(static_cast<std::size_t>(d.n * d.c * oh * ow));
  for (std::int64_t p = 0; p < d.n * d.c; ++p) {
    const T* src = xs.data() + p * d.plane();
    T* dst = out.data() + p * oh * ow;
    for (std::int64_t i = 0; i < oh; ++i) {
      const T* srow = src + (i / f) * d.w;
      T* drow = dst + i * ow;
      for (std::int64_t j = 0; j < ow; ++j) drow[j] = srow[j / f];
    }
  }
  return make_output(d.with(d.c, oh, ow), std::move(out), "upsample_nearest", {x},
                     [d, f, oh, ow](TensorNode<T>& self) {
                       T* gx = input_grad(self, 0);
                       if (!gx) return;
                       for (std::int64_t p = 0; p < d.n * d.c; ++p) {
                         const T* src = self.grad.data() + p * oh * ow;
                         T* dst = gx + p * d.plane();
                         for (std::int64_t i = 0; i < oh; ++i) {
                           T* drow = dst + (i / f) * d.w;
                           const T* srow = src + i * ow;
                           for (std::int64_t j = 0; j < ow; ++j) drow[j / f] += srow[j];
                         }
                       }
                     });
}

template <typename T>
Tensor<T> avg_pool(const Tensor<T>& x, int factor) {
  if (factor < 1) throw ArgumentError("avg_pool: factor must be >= 1");
  const ImageDims d = image_dims(x.shape(), "avg_pool");
  const std::int64_t f = factor;
  if (d.h % f != 0 || d.w % f != 0) throw DimensionError("avg_pool: extents not divisible by factor");
  const std::int64_t oh = d.h / f;
  const std::int64_t ow = d.w / f;
  const T inv = T{1} / static_cast<T>(f * f);
  const auto xs = x.data();
  std::vector<T> out(static_cast<std::size_t>(d.n * d.c * oh * ow), T{0});
  for (std::int64_t p = 0; p < d.n * d.c; ++p) {
    const T* src = xs.data() + p * d.plane();
    T* dst = out.data() + p * oh * ow;
    for (std::int64_t i = 0; i < d.h; ++i) {
      for (std::int64_t j = 0; j < d.w; ++j) dst[(i / f) * ow + j / f] += src[i * d.w + j];
    }
    for (std::int64_t i = 0; i < oh * ow; ++i) dst[i] *= inv;
  }
  return make_output(d.with(d.c, oh, ow), std::move(out), "avg_pool", {x},
                     [d, f, ow, oh, inv](TensorNode<T>& self) {
                       T* gx = input_grad(self, 0);
                       if (!gx) return;
                       for (std::int64_t p = 0; p < d.n * d.c; ++p) {
                         const T* src = self.grad.data() + p * oh * ow;
                         T* dst = gx + p * d.plane();
                         for (std::int64_t i = 0; i < d.h; ++i) {
                           for (std::int64_t j = 0; j < d.w; ++j) dst[i * d.w + j] += src[(i / f) * ow + j / f] * inv;
                         }
                       }
                     });
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ArgumentError("concat_channels: no operands");
  const ImageDims first = image_dims(parts[0].shape(), "concat_channels");
  std::vector<std::int64_t> channels;
  std::int64_t total = 0;
  for (const auto& p : parts) {
    const ImageDims d = image_dims(p.shape(), "concat_channels");
    if (d.batched != first.batched || d.n != first.n || d.h != first.h || d.w != first.w) {
      throw DimensionError("concat_channels: operands disagree outside the channel axis");
    }
    channels.push_back(d.c);
    total += d.c;
  }
  const std::int64_t plane = first.plane();
  std::vector<T> out(static_cast<std::size_t>(first.n * total * plane));
  for (std::int64_t n = 0; n < first.n; ++n) {
    std::int64_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const auto src = parts[k].data();
      const std::int64_t len = channels[k] * plane;
      std::copy_n(src.data() + n * len, len, out.data() + (n * total + offset) * plane);
      offset += channels[k];
    }
  }
  // make_output takes an initializer_list; build the node by hand for N inputs.
  auto node = std::make_shared<TensorNode<T>>();
  node->shape = first.with(total, first.h, first.w);
  node->data = std::move(out);
  node->op = "concat_channels";
  bool track = false;
  if (grad_enabled()) {
    for (const auto& p : parts) track = track || p.requires_grad();
  }
  if (track) {
    node->requires_grad = true;
    node->leaf = false;
    for (const auto& p : parts) node->inputs.push_back(p.node());
    node->backward = [channels, total, plane, n_samples = first.n](TensorNode<T>& self) {
      for (std::int64_t n = 0; n < n_samples; ++n) {
        std::int64_t offset = 0;
        for (std::size_t k = 0; k < channels.size(); ++k) {
          const std::int64_t len = channels[k] * plane;
          if (T* g = input_grad(self, k)) {
            const T* src = self.grad.data() + (n * total + offset) * plane;
            T* dst = g + n * len;
            for (std::int64_t i = 0; i < len; ++i) dst[i] += src[i];
          }
          offset += channels[k];
        }
      }
    };
  }
  return Tensor<T>(std::move(node));
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
  }
  const auto xs = x.data();
  return make_output(std::move(shape), std::vector<T>(xs.begin(), xs.end()), "reshape", {x},
                     [](TensorNode<T>& self) {
                       if (T* g = input_grad(self, 0)) {
                         for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
                       }
                     });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total{0};
  for (T v : x.data()) total += v;
  return make_output(Shape{}, std::vector<T>{total}, "sum", {x}, [](TensorNode<T>& self) {
    if (T* g = input_grad(self, 0)) {
      const T s = self.grad[0];
      for (std::size_t i = 0; i < self.inputs[0]->data.size(); ++i) g[i] += s;
    }
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  const auto n = x.numel();
  if (n == 0) throw DimensionError("mean of an empty tensor");
  T total{0};
  for (T v : x.data()) total += v;
  const T inv = T{1} / static_cast<T>(n);
  return make_output(Shape{}, std::vector<T>{total * inv}, "mean", {x}, [inv](TensorNode<T>& self) {
    if (T* g = input_grad(self, 0)) {
      const T s = self.grad[0] * inv;
      for (std::size_t i = 0; i < self.inputs[0]->data.size(); ++i) g[i] += s;
    }
  });
}

template <typename T>
Tensor<T> sample_mean(const Tensor<T>& x) {
  if (x.rank() < 1) throw DimensionError("sample_mean: needs a leading batch axis");
  const std::int64_t n = x.dim(0);
  if (n == 0 || x.numel() == 0) throw DimensionError("sample_mean: empty tensor");
  const std::int64_t per = x.numel() / n;
  const T inv = T{1} / static_cast<T>(per);
  const auto xs = x.data();
  std::vector<T> out(static_cast<std::size_t>(n));
  for (std::int64_t s = 0; s < n; ++s) {
    T total{0};
    for (std::int64_t i = 0; i < per; ++i) total += xs[static_cast<std::size_t>(s * per + i)];
    out[static_cast<std::size_t>(s)] = total * inv;
  }
  return make_output(Shape{n}, std::move(out), "sample_mean", {x}, [n, per, inv](TensorNode<T>& self) {
    if (T* g = input_grad(self, 0)) {
      for (std::int64_t s = 0; s < n; ++s) {
        const T v = self.grad[static_cast<std::size_t>(s)] * inv;
        for (std::int64_t i = 0; i < per; ++i) g[s * per + i] += v;
      }
    }
  });
}

template <typename T>
Tensor<T> channel_dot(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "channel_dot");
  const ImageDims d = image_dims(a.shape(), "channel_dot");
  const auto as = a.data();
  const auto bs = b.data();
  const std::int64_t plane = d.plane();
  std::vector<T> out(static_cast<std::size_t>(d.n * plane), T{0});
  for (std::int64_t n = 0; n < d.n; ++n) {
    T* o = out.data() + n * plane;
    for (std::int64_t c = 0; c < d.c; ++c) {
      const T* pa = as.data() + (n * d.c + c) * plane;
      const T* pb = bs.data() + (n * d.c + c) * plane;
      for (std::int64_t i = 0; i < plane; ++i) o[i] += pa[i] * pb[i];
    }
  }
  return make_output(d.with(1, d.h, d.w), std::move(out), "channel_dot", {a, b}, [d, plane](TensorNode<T>& self) {
    const auto& av = self.inputs[0]->data;
    const auto& bv = self.inputs[1]->data;
    T* ga = input_grad(self, 0);
    T* gb = input_grad(self, 1);
    for (std::int64_t n = 0; n < d.n; ++n) {
      const T* go = self.grad.data() + n * plane;
      for (std::int64_t c = 0; c < d.c; ++c) {
        const std::int64_t base = (n * d.c + c) * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
          if (ga) ga[base + i] += go[i] * bv[static_cast<std::size_t>(base + i)];
          if (gb) gb[base + i] += go[i] * av[static_cast<std::size_t>(base + i)];
        }
      }
    }
  });
}

template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, std::span<const std::int32_t> ids, std::int64_t n,
                           std::int64_t h, std::int64_t w) {
  if (table.rank() != 2) throw DimensionError("embedding_lookup: table must be [L,C]");
  if (static_cast<std::int64_t>(ids.size()) != n * h * w) {
    throw DimensionError("embedding_lookup: id count does not match [N,H,W]");
  }
  const std::int64_t rows = table.dim(0);
  const std::int64_t c = table.dim(1);
  for (auto id : ids) {
    if (id < 0 || id >= rows) {
      throw DataError("embedding_lookup: label id " + std::to_string(id) + " outside table of " +
                      std::to_string(rows) + " rows");
    }
  }
  const std::int64_t plane = h * w;
  const auto ts = table.data();
  std::vector<T> out(static_cast<std::size_t>(n * c * plane));
  for (std::int64_t s = 0; s < n; ++s) {
    for (std::int64_t i = 0; i < plane; ++i) {
      const std::int64_t id = ids[static_cast<std::size_t>(s * plane + i)];
      for (std::int64_t k = 0; k < c; ++k) {
        out[static_cast<std::size_t>((s * c + k) * plane + i)] = ts[static_cast<std::size_t>(id * c + k)];
      }
    }
  }
  std::vector<std::int32_t> saved(ids.begin(), ids.end());
  return make_output(Shape{n, c, h, w}, std::move(out), "embedding_lookup", {table},
                     [saved = std::move(saved), n, c, plane](TensorNode<T>& self) {
                       T* gt = input_grad(self, 0);
                       if (!gt) return;
                       for (std::int64_t s = 0; s < n; ++s) {
                         for (std::int64_t i = 0; i < plane; ++i) {
                           const std::int64_t id = saved[static_cast<std::size_t>(s * plane + i)];
                           for (std::int64_t k = 0; k < c; ++k) {
                             gt[id * c + k] += self.grad[static_cast<std::size_t>((s * c + k) * plane + i)];
                           }
                         }
                       }
                     });
}

#define CCFPSE_INSTANTIATE_OPS(T)                                                                             \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);              \
  template Tensor<T> pointwise_conv<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                              \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                                              \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                                              \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                                           \
  template Tensor<T> add_scalar<T>(const Tensor<T>&, T);                                                      \
  template Tensor<T> leaky_relu<T>(const Tensor<T>&, T);                                                      \
  template Tensor<T> relu<T>(const Tensor<T>&);                                                               \
  template Tensor<T> sigmoid<T>(const Tensor<T>&);                                                            \
  template Tensor<T> tanh<T>(const Tensor<T>&);                                                               \
  template Tensor<T> abs<T>(const Tensor<T>&);                                                                \
  template Tensor<T> upsample_nearest<T>(const Tensor<T>&, int);                                              \
  template Tensor<T> avg_pool<T>(const Tensor<T>&, int);                                                      \
  template Tensor<T> concat_channels<T>(const std::vector<Tensor<T>>&);                                       \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                                     \
  template Tensor<T> sum<T>(const Tensor<T>&);                                                                \
  template Tensor<T> mean<T>(const Tensor<T>&);                                                               \
  template Tensor<T> sample_mean<T>(const Tensor<T>&);                                                        \
  template Tensor<T> channel_dot<T>(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> embedding_lookup<T>(const Tensor<T>&, std::span<const std::int32_t>, std::int64_t,       \
                                         std::int64_t, std::int64_t);

CCFPSE_INSTANTIATE_OPS(float)
CCFPSE_INSTANTIATE_OPS(double)

}  // namespace ccfpse
