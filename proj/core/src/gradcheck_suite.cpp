#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "ccfpse/detail/autograd.hpp"
#include "ccfpse/generator.hpp"
#include "ccfpse/gradcheck.hpp"
#include "ccfpse/labels.hpp"
#include "ccfpse/layers.hpp"
#include "ccfpse/ops.hpp"
#include "ccfpse/weight_net.hpp"

namespace ccfpse {

namespace {

using T = double;
using Inputs = std::vector<Tensor<T>>;
using Builder = std::function<Tensor<T>(const Inputs&)>;

constexpr double kPrimitiveTol = 1e-4;
constexpr double kEndToEndTol = 1e-3;

class Fixture {
 public:
  explicit Fixture(std::uint64_t seed) : rng_(seed) {}

  Tensor<T> normal(Shape shape, double stddev = 1.0) {
    std::normal_distribution<T> dist(0.0, stddev);
    std::vector<T> v(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& x : v) x = dist(rng_);
    return Tensor<T>(std::move(shape), std::move(v));
  }

  // Magnitudes in [0.1, 1] with random sign, so piecewise ops never sit on a kink.
  Tensor<T> away_from_zero(Shape shape) {
    std::uniform_real_distribution<T> mag(0.1, 1.0);
    std::bernoulli_distribution sign(0.5);
    std::vector<T> v(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& x : v) x = sign(rng_) ? mag(rng_) : -mag(rng_);
    return Tensor<T>(std::move(shape), std::move(v));
  }

  std::vector<std::int32_t> ids(std::size_t count, int labels) {
    std::uniform_int_distribution<int> dist(0, labels - 1);
    std::vector<std::int32_t> v(count);
    for (auto& x : v) x = dist(rng_);
    return v;
  }

  // Reduces any output to a scalar through a fixed random weighting, so every
  // output element contributes a distinct factor to the gradient.
  Tensor<T> project(const Tensor<T>& y) {
    auto it = weights_.find(y.shape());
    if (it == weights_.end()) it = weights_.emplace(y.shape(), normal(y.shape())).first;
    return sum(mul(y, it->second));
  }

  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
  std::map<Shape, Tensor<T>> weights_;
};

// Op with a deliberately wrong gradient rule: forward x^2, backward 3x.
Tensor<T> faulty_square(const Tensor<T>& x) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= v;
  return detail::make_output<T>(x.shape(), std::move(out), "faulty_square", {x}, [](TensorNode<T>& self) {
    T* gx = detail::input_grad(self, 0);
    if (gx == nullptr) return;
    const auto& xs = self.inputs[0]->data;
    for (std::size_t i = 0; i < xs.size(); ++i) gx[i] += T(3) * xs[i] * self.grad[i];
  });
}

// Finite differences against the accumulated grads of parameters captured by
// `loss` (rather than copies passed in), probing `per_tensor` entries each.
GradCheckResult check_param_gradients(const std::function<Tensor<T>()>& loss, const std::vector<Tensor<T>>& params,
                                      double tolerance, std::int64_t per_tensor, std::mt19937_64& rng) {
  for (const auto& p : params) p.zero_grad();
  backward(loss());
  GradCheckResult result;
  const T h = 1e-6;
  NoGradGuard guard;
  for (const auto& p : params) {
    std::vector<std::int64_t> idx(static_cast<std::size_t>(p.numel()));
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    if (static_cast<std::int64_t>(idx.size()) > per_tensor) idx.resize(static_cast<std::size_t>(per_tensor));
    const auto analytic = p.grad();
    auto values = p.mutable_data();
    for (auto k : idx) {
      const auto i = static_cast<std::size_t>(k);
      const T original = values[i];
      values[i] = original + h;
      const T plus = loss().item();
      values[i] = original - h;
      const T minus = loss().item();
      values[i] = original;
      const double numeric = (plus - minus) / (2 * h);
      result.max_abs_error = std::max(result.max_abs_error, std::abs(analytic[i] - numeric));
      result.max_rel_error = std::max(result.max_rel_error, relative_error(analytic[i], numeric));
      ++result.checked;
    }
  }
  result.passed = result.max_rel_error <= tolerance;
  return result;
}

void run_case(GradCheckReport& report, const std::string& name, const Builder& loss, const Inputs& inputs,
              double tol = kPrimitiveTol) {
  report.cases.push_back({name, check_gradients<T>(loss, inputs, tol), tol});
}

void primitives(GradCheckReport& report, Fixture& fx) {
  auto x = fx.normal({2, 3, 4, 4});
  run_case(report, "conv2d k3 s1 p1",
           [&](const Inputs& in) { return fx.project(conv2d(in[0], in[1], in[2], 1, 1)); },
           {x, fx.normal({4, 3, 3, 3}), fx.normal({4})});
  run_case(report, "conv2d k3 s2 p1",
           [&](const Inputs& in) { return fx.project(conv2d(in[0], in[1], in[2], 2, 1)); },
           {x, fx.normal({2, 3, 3, 3}), fx.normal({2})});
  run_case(report, "conv2d unbatched no bias",
           [&](const Inputs& in) { return fx.project(conv2d(in[0], in[1], Tensor<T>(), 1, 0)); },
           {fx.normal({2, 4, 4}), fx.normal({3, 2, 3, 3})});
  run_case(report, "pointwise_conv",
           [&](const Inputs& in) { return fx.project(pointwise_conv(in[0], in[1], in[2])); },
           {x, fx.normal({4, 3}), fx.normal({4})});

  const Shape s{2, 2, 4, 4};
  run_case(report, "add", [&](const Inputs& in) { return fx.project(add(in[0], in[1])); },
           {fx.normal(s), fx.normal(s)});
  run_case(report, "sub", [&](const Inputs& in) { return fx.project(sub(in[0], in[1])); },
           {fx.normal(s), fx.normal(s)});
  run_case(report, "mul", [&](const Inputs& in) { return fx.project(mul(in[0], in[1])); },
           {fx.normal(s), fx.normal(s)});
  run_case(report, "scale", [&](const Inputs& in) { return fx.project(scale(in[0], T(-1.7))); }, {fx.normal(s)});
  run_case(report, "add_scalar", [&](const Inputs& in) { return fx.project(add_scalar(in[0], T(0.3))); },
           {fx.normal(s)});
  run_case(report, "leaky_relu", [&](const Inputs& in) { return fx.project(leaky_relu(in[0], T(0.2))); },
           {fx.away_from_zero(s)});
  run_case(report, "relu", [&](const Inputs& in) { return fx.project(relu(in[0])); }, {fx.away_from_zero(s)});
  run_case(report, "sigmoid", [&](const Inputs& in) { return fx.project(sigmoid(in[0])); }, {fx.normal(s)});
  run_case(report, "tanh", [&](const Inputs& in) { return fx.project(tanh(in[0])); }, {fx.normal(s)});
  run_case(report, "abs", [&](const Inputs& in) { return fx.project(abs(in[0])); }, {fx.away_from_zero(s)});
  run_case(report, "upsample_nearest", [&](const Inputs& in) { return fx.project(upsample_nearest(in[0], 2)); },
           {fx.normal({2, 2, 2, 2})});
  run_case(report, "avg_pool", [&](const Inputs& in) { return fx.project(avg_pool(in[0], 2)); }, {fx.normal(s)});
  run_case(report, "concat_channels",
           [&](const Inputs& in) { return fx.project(concat_channels<T>({in[0], in[1], in[2]})); },
           {fx.normal({2, 1, 4, 4}), fx.normal({2, 3, 4, 4}), fx.normal({2, 2, 4, 4})});
  run_case(report, "reshape", [&](const Inputs& in) { return fx.project(reshape(in[0], Shape{4, 2, 8})); },
           {fx.normal(s)});
  run_case(report, "sum", [&](const Inputs& in) { return scale(sum(in[0]), T(0.7)); }, {fx.normal(s)});
  run_case(report, "mean", [&](const Inputs& in) { return mul(mean(in[0]), mean(in[0])); }, {fx.normal(s)});
  run_case(report, "sample_mean", [&](const Inputs& in) { return fx.project(sample_mean(in[0])); }, {fx.normal(s)});
  run_case(report, "channel_dot", [&](const Inputs& in) { return fx.project(channel_dot(in[0], in[1])); },
           {fx.normal({2, 3, 4, 4}), fx.normal({2, 3, 4, 4})});
  const auto ids = fx.ids(2 * 4 * 4, 5);
  run_case(report, "embedding_lookup",
           [&](const Inputs& in) { return fx.project(embedding_lookup(in[0], ids, 2, 4, 4)); },
           {fx.normal({5, 3})});

  RunningStats<T> stats{Tensor<T>(Shape{3}), Tensor<T>(Shape{3}, T(1)), Tensor<T>(Shape{1}), 0.1};
  run_case(report, "batch_norm train",
           [&](const Inputs& in) { return fx.project(batch_norm(in[0], in[1], in[2], Mode::kTrain, stats)); },
           {fx.normal({2, 3, 4, 4}), fx.normal({3}), fx.normal({3})});
  run_case(report, "instance_norm",
           [&](const Inputs& in) { return fx.project(instance_norm(in[0], in[1], in[2])); },
           {fx.normal({2, 3, 4, 4}), fx.normal({3}), fx.normal({3})});
}

void conditional_ops(GradCheckReport& report, Fixture& fx) {
  for (int k : {1, 3, 5}) {
    run_case(report, "conditional_depthwise_conv k" + std::to_string(k),
             [&](const Inputs& in) { return fx.project(conditional_depthwise_conv(in[0], in[1])); },
             {fx.normal({2, 3, 4, 4}), fx.normal({2, 3, k, k, 4, 4})});
  }
  run_case(report, "conditional_depthwise_conv unbatched",
           [&](const Inputs& in) { return fx.project(conditional_depthwise_conv(in[0], in[1])); },
           {fx.normal({4, 4, 4}), fx.normal({4, 3, 3, 4, 4})});
  run_case(report, "conditional_attention",
           [&](const Inputs& in) { return fx.project(conditional_attention(in[0], sigmoid(in[1]))); },
           {fx.normal({2, 4, 4, 4}), fx.normal({2, 4, 4, 4})});
  run_case(report, "depthwise -> pointwise -> attention",
           [&](const Inputs& in) {
             auto y = pointwise_conv(conditional_depthwise_conv(in[0], in[1]), in[2], Tensor<T>());
             return fx.project(conditional_attention(y, sigmoid(in[3])));
           },
           {fx.normal({1, 3, 4, 4}), fx.normal({1, 3, 3, 3, 4, 4}), fx.normal({4, 3}), fx.normal({1, 4, 4, 4})});
}

void end_to_end(GradCheckReport& report, Fixture& fx, std::uint64_t seed) {
  GeneratorConfig gcfg;
  gcfg.z_channels = 4;
  gcfg.widths = {4, 4, 3};
  gcfg.base_height = 2;
  gcfg.base_width = 2;
  WeightNetConfig wcfg;
  wcfg.decoder_width = 4;
  wcfg.head_hidden = 4;
  wcfg.bottleneck_convs = 1;
  // Full-scale heads so predicted kernels are O(1) and every path carries signal.
  wcfg.head_scale = 1.0;
  const int labels = 3;
  Generator<T> gen(gcfg, seed + 1);
  WeightNet<T> wnet(wcfg, gcfg, labels, seed + 2);

  std::vector<LabelMap> layout;
  for (int n = 0; n < 2; ++n) layout.emplace_back(8, 8, labels, fx.ids(64, labels));
  const auto z = fx.normal({2, gcfg.z_channels, 2, 2});

  run_case(
      report, "generator+weight_net wrt noise",
      [&](const Inputs& in) { return fx.project(gen.forward(in[0], wnet.predict_all(layout), Mode::kTrain)); }, {z},
      kEndToEndTol);

  std::vector<Tensor<T>> params;
  for (const auto& p : gen.params().params()) params.push_back(p.tensor);
  for (const auto& p : wnet.params().params()) params.push_back(p.tensor);
  auto loss = [&] { return fx.project(gen.forward(z, wnet.predict_all(layout), Mode::kTrain)); };
  report.cases.push_back({"generator+weight_net wrt parameters",
                          check_param_gradients(loss, params, kEndToEndTol, 4, fx.rng()), kEndToEndTol});
}

}  // namespace

GradCheckScope parse_gradcheck_scope(const std::string& name) {
  if (name == "primitives") return GradCheckScope::kPrimitives;
  if (name == "ccops") return GradCheckScope::kConditionalOps;
  if (name == "endtoend") return GradCheckScope::kEndToEnd;
  throw ArgumentError("unknown gradcheck scope '" + name + "' (expected primitives, ccops or endtoend)");
}

GradCheckReport run_gradcheck_suite(GradCheckScope scope, std::uint64_t seed, bool inject_fault) {
  GradCheckReport report;
  Fixture fx(seed);
  switch (scope) {
    case GradCheckScope::kPrimitives:
      primitives(report, fx);
      break;
    case GradCheckScope::kConditionalOps:
      conditional_ops(report, fx);
      break;
    case GradCheckScope::kEndToEnd:
      end_to_end(report, fx, seed);
      break;
  }
  if (inject_fault) {
    run_case(report, "faulty_square (injected)", [&](const Inputs& in) { return fx.project(faulty_square(in[0])); },
             {fx.normal({2, 2, 2})});
  }
  return report;
}

}  // namespace ccfpse
