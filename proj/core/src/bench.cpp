#include "ccfpse/bench.hpp"

#include <chrono>
#include <limits>
#include <random>

#include "ccfpse/generator.hpp"
#include "ccfpse/ops.hpp"
#include "ccfpse/parallel.hpp"

namespace ccfpse {

template <typename T>
Tensor<T> naive_conditional_conv(const Tensor<T>& x, const Tensor<T>& weights) {
  if (x.rank() != 3 || weights.rank() != 6) {
    throw DimensionError("naive_conditional_conv: expected [C,H,W] and [D,C,k,k,H,W]");
  }
  const std::int64_t c = x.dim(0);
  const std::int64_t h = x.dim(1);
  const std::int64_t w = x.dim(2);
  const std::int64_t d = weights.dim(0);
  const std::int64_t k = weights.dim(2);
  if (weights.dim(1) != c || weights.dim(3) != k || weights.dim(4) != h || weights.dim(5) != w) {
    throw DimensionError("naive_conditional_conv: weights " + shape_string(weights.shape()) + " do not match input " +
                         shape_string(x.shape()));
  }
  if (k % 2 == 0) throw ArgumentError("naive_conditional_conv: kernel size must be odd");
  const std::int64_t p = k / 2;
  const std::int64_t plane = h * w;
  const auto xs = x.data();
  const auto ws = weights.data();
  std::vector<T> out(static_cast<std::size_t>(d * plane), T{0});
  parallel_for(d, [&](std::int64_t o) {
    T* y = out.data() + o * plane;
    for (std::int64_t ci = 0; ci < c; ++ci) {
      const T* xc = xs.data() + ci * plane;
      for (std::int64_t m = 0; m < k; ++m) {
        for (std::int64_t q = 0; q < k; ++q) {
          const T* wt = ws.data() + (((o * c + ci) * k + m) * k + q) * plane;
          for (std::int64_t i = 0; i < h; ++i) {
            const std::int64_t si = i + m - p;
            if (si < 0 || si >= h) continue;
            for (std::int64_t j = 0; j < w; ++j) {
              const std::int64_t sj = j + q - p;
              if (sj < 0 || sj >= w) continue;
              y[i * w + j] += xc[si * w + sj] * wt[i * w + j];
            }
          }
        }
      }
    }
  });
  add_mac_count(d * c * k * k * plane);
  return Tensor<T>(Shape{d, h, w}, std::move(out));
}

namespace {

Tensor<float> random_tensor(Shape shape, std::mt19937_64& rng) {
  std::normal_distribution<float> dist(0.0f, 1.0f);
  std::vector<float> values(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : values) v = dist(rng);
  return Tensor<float>(std::move(shape), std::move(values));
}

template <typename Fn>
double best_seconds(int repeats, Fn&& fn) {
  double best = std::numeric_limits<double>::infinity();
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
  }
  return best;
}

}  // namespace

BenchReport bench_ops(const BenchConfig& config) {
  const auto c = config.channels_in;
  const auto d = config.channels_out;
  const auto k = config.kernel;
  const auto h = config.height;
  const auto w = config.width;
  if (c <= 0 || d <= 0 || k <= 0 || h <= 0 || w <= 0 || config.head_channels <= 0 || config.repeats <= 0) {
    throw ArgumentError("bench_ops: sizes and repeats must be positive");
  }
  if (k % 2 == 0) throw ArgumentError("bench_ops: kernel size must be odd");

  BenchReport report;
  report.config = config;
  const std::int64_t plane = h * w;
  report.depthwise_macs = c * k * k * plane;
  report.pointwise_macs = c * d * plane;
  report.naive_macs = d * c * k * k * plane;

  const auto counts = count_conditional_params(c, d, k, h, w);
  const auto f = config.head_channels;

  report.factorized.path = "factorized";
  report.factorized.macs = report.depthwise_macs + report.pointwise_macs;
  report.factorized.predicted_params = counts.conditional;
  report.factorized.head_params = f * (c * k * k + d) + (c * k * k + d);
  report.factorized.head_macs = f * (c * k * k + d) * plane;

  report.naive.path = "naive";
  report.naive.macs = report.naive_macs;
  report.naive.predicted_params = counts.naive;
  report.naive.head_params = f * (d * c * k * k) + d * c * k * k;
  report.naive.head_macs = f * (d * c * k * k) * plane;

  std::mt19937_64 rng(config.seed);
  const auto x = random_tensor({c, h, w}, rng);
  const auto kernels = random_tensor({c, k, k, h, w}, rng);
  const auto pw = random_tensor({d, c}, rng);
  const auto full = random_tensor({d, c, k, k, h, w}, rng);

  NoGradGuard guard;
  auto factorized = [&] { return pointwise_conv(conditional_depthwise_conv(x, kernels), pw, Tensor<float>()); };
  auto naive = [&] { return naive_conditional_conv(x, full); };

  reset_mac_count();
  factorized();
  report.factorized.traced_macs = mac_count();
  reset_mac_count();
  naive();
  report.naive.traced_macs = mac_count();

  if (config.timed) {
    report.factorized.seconds = best_seconds(config.repeats, factorized);
    report.naive.seconds = best_seconds(config.repeats, naive);
  }
  return report;
}

void write_bench_csv(std::ostream& out, const BenchReport& report) {
  const auto& cfg = report.config;
  out << "path,C,D,k,H,W,macs,traced_macs,head_macs,predicted_params,head_params,seconds\n";
  for (const auto* row : {&report.factorized, &report.naive}) {
    out << row->path << ',' << cfg.channels_in << ',' << cfg.channels_out << ',' << cfg.kernel << ',' << cfg.height
        << ',' << cfg.width << ',' << row->macs << ',' << row->traced_macs << ',' << row->head_macs << ','
        << row->predicted_params << ',' << row->head_params << ',' << row->seconds << '\n';
  }
}

template Tensor<float> naive_conditional_conv<float>(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> naive_conditional_conv<double>(const Tensor<double>&, const Tensor<double>&);

}  // namespace ccfpse
