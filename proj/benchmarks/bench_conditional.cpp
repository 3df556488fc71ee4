// Timing of the predicted-weight convolution paths.
#include <random>

#include <benchmark/benchmark.h>

#include "ccfpse/bench.hpp"
#include "ccfpse/generator.hpp"
#include "ccfpse/ops.hpp"

namespace {

using ccfpse::Tensor;

Tensor<float> uniform(const ccfpse::Shape& shape, std::mt19937_64& rng) {
  Tensor<float> t(shape);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  for (auto& v : t.mutable_data()) v = dist(rng);
  return t;
}

// args: C, D, k, H (= W)
void BM_Factorized(benchmark::State& state) {
  const auto c = state.range(0), d = state.range(1), k = state.range(2), h = state.range(3);
  std::mt19937_64 rng(1);
  auto x = uniform({1, c, h, h}, rng);
  auto v = uniform({1, c, k, k, h, h}, rng);
  auto w = uniform({d, c, 1, 1}, rng);
  Tensor<float> b({d});
  ccfpse::NoGradGuard guard;
  for (auto _ : state) {
    auto y = ccfpse::conv2d(ccfpse::conditional_depthwise_conv(x, v), w, b, 1, 0);
    benchmark::DoNotOptimize(y.data().data());
  }
  state.counters["macs"] = static_cast<double>(c * k * k * h * h + c * d * h * h);
}

void BM_Naive(benchmark::State& state) {
  const auto c = state.range(0), d = state.range(1), k = state.range(2), h = state.range(3);
  std::mt19937_64 rng(1);
  auto x = uniform({c, h, h}, rng);
  auto w = uniform({d, c, k, k, h, h}, rng);
  for (auto _ : state) {
    auto y = ccfpse::naive_conditional_conv(x, w);
    benchmark::DoNotOptimize(y.data().data());
  }
  state.counters["macs"] = static_cast<double>(d * c * k * k * h * h);
}

void BM_DepthwiseBackward(benchmark::State& state) {
  const auto c = state.range(0), k = state.range(2), h = state.range(3);
  std::mt19937_64 rng(1);
  auto x = uniform({2, c, h, h}, rng);
  auto v = uniform({2, c, k, k, h, h}, rng);
  x.set_requires_grad(true);
  v.set_requires_grad(true);
  for (auto _ : state) {
    x.zero_grad();
    v.zero_grad();
    auto loss = ccfpse::sum(ccfpse::conditional_depthwise_conv(x, v));
    ccfpse::backward(loss);
    benchmark::DoNotOptimize(v.grad().data());
  }
}

}  // namespace

BENCHMARK(BM_Factorized)->Args({16, 16, 3, 16})->Args({32, 32, 3, 32})->Args({64, 64, 3, 32});
BENCHMARK(BM_Naive)->Args({16, 16, 3, 16})->Args({32, 32, 3, 32})->Args({64, 64, 3, 32});
BENCHMARK(BM_DepthwiseBackward)->Args({16, 16, 3, 16})->Args({32, 32, 3, 32});
BENCHMARK_MAIN();
