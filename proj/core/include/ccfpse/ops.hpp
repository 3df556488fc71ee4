#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ccfpse/tensor.hpp"

// Primitive differentiable operators.
//
// Image-shaped operands are [N,C,H,W] or, for a single sample, [C,H,W]; the
// output keeps the input's rank. Apart from bias-over-spatial, nothing
// broadcasts: mismatched extents raise DimensionError.

namespace ccfpse {

/// 2-D cross-correlation with zero padding.
/// H' = floor((H + 2*pad - k) / stride) + 1. `bias` may be undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, int stride, int pad);

/// 1x1 convolution with a [D,C] weight: out[d] = sum_c w[d,c] x[c] + b[d].
template <typename T>
Tensor<T> pointwise_conv(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T value);

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T negative_slope = T(0.2));
template <typename T>
Tensor<T> relu(const Tensor<T>& x);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T>
Tensor<T> tanh(const Tensor<T>& x);
/// |x| with subgradient 0 at the origin.
template <typename T>
Tensor<T> abs(const Tensor<T>& x);

/// Replicates each cell into a factor x factor block.
template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& x, int factor);

/// Mean over non-overlapping factor x factor blocks; extents must divide.
template <typename T>
Tensor<T> avg_pool(const Tensor<T>& x, int factor);

/// Concatenates along the channel axis; all other extents must agree.
template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// Scalar (rank-0) sum / mean of every element.
template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);

/// Mean over every axis except the leading one: [N, ...] -> [N].
template <typename T>
Tensor<T> sample_mean(const Tensor<T>& x);

/// Channel-wise inner product: [N,C,H,W] x [N,C,H,W] -> [N,1,H,W].
template <typename T>
Tensor<T> channel_dot(const Tensor<T>& a, const Tensor<T>& b);

/// Gathers rows of `table` [L,C] at `ids` laid out as [N,H,W] -> [N,C,H,W].
/// Throws DataError on ids outside [0, L).
template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, std::span<const std::int32_t> ids, std::int64_t n,
                           std::int64_t h, std::int64_t w);

/// Multiply-accumulate operations issued by the convolution kernels since the
/// last reset (process-wide). Used to cross-check closed-form cost formulas.
std::int64_t mac_count();
void reset_mac_count();
void add_mac_count(std::int64_t macs);

}  // namespace ccfpse
