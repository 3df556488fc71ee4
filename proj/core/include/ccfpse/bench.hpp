#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "ccfpse/tensor.hpp"

namespace ccfpse {

struct BenchConfig {
  std::int64_t channels_in = 64;   // C
  std::int64_t channels_out = 64;  // D
  std::int64_t kernel = 3;         // k
  std::int64_t height = 32;
  std::int64_t width = 32;
  /// Channels of the feature map the 1x1 prediction heads read from.
  std::int64_t head_channels = 32;
  int repeats = 3;
  std::uint64_t seed = 1;
  /// Skip wall-clock timing (closed forms and traced counts only).
  bool timed = true;
};

struct BenchRow {
  std::string path;
  std::int64_t macs = 0;         // closed form, per sample
  std::int64_t traced_macs = 0;  // counted by the kernels during one forward
  std::int64_t head_macs = 0;    // 1x1 prediction head that emits the weights
  std::int64_t predicted_params = 0;
  std::int64_t head_params = 0;
  double seconds = 0.0;          // best of `repeats`, 0 when untimed
};

struct BenchReport {
  BenchConfig config;
  std::int64_t depthwise_macs = 0;  // C*k*k*H*W
  std::int64_t pointwise_macs = 0;  // C*D*H*W
  std::int64_t naive_macs = 0;      // D*C*k*k*H*W
  BenchRow factorized;
  BenchRow naive;
};

/// Full spatially varying convolution with a separate [D,C,k,k] kernel per
/// location: Y[d,i,j] = sum_{c,m,n} X[c,i+m-p,j+n-p] * W[d,c,m,n,i,j].
/// `x` is [C,H,W], `weights` [D,C,k,k,H,W]. Forward only, no recording.
template <typename T>
Tensor<T> naive_conditional_conv(const Tensor<T>& x, const Tensor<T>& weights);

/// Closed-form cost of the factorized (depthwise + pointwise) path against a
/// naive predicted full convolution, with traced MAC counts and timings.
BenchReport bench_ops(const BenchConfig& config);

/// Header plus one row per path.
void write_bench_csv(std::ostream& out, const BenchReport& report);

}  // namespace ccfpse
