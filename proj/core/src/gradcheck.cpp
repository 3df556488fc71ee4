#include "ccfpse/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace ccfpse {

template <typename T>
Tensor<T> finite_diff_grad(const std::function<T(const Tensor<T>&)>& f, const Tensor<T>& x, T h) {
  if (!(h > T{0})) throw ArgumentError("finite_diff_grad: step must be positive");
  NoGradGuard no_grad;
  Tensor<T> probe = x.detach();
  auto values = probe.mutable_data();
  std::vector<T> grad(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const T original = values[i];
    values[i] = original + h;
    const T plus = f(probe);
    values[i] = original - h;
    const T minus = f(probe);
    values[i] = original;
    grad[i] = (plus - minus) / (T{2} * h);
  }
  return Tensor<T>(x.shape(), std::move(grad));
}

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (scale < floor) return 0.0;
  return std::abs(analytic - numeric) / scale;
}

template <typename T>
GradCheckResult check_gradients(const std::function<Tensor<T>(const std::vector<Tensor<T>>&)>& loss,
                                const std::vector<Tensor<T>>& inputs, double tolerance, T h,
                                std::int64_t max_elements_per_input, std::uint64_t seed) {
  std::vector<Tensor<T>> leaves;
  leaves.reserve(inputs.size());
  for (const auto& in : inputs) {
    Tensor<T> leaf = in.detach();
    leaf.set_requires_grad(true);
    leaves.push_back(leaf);
  }
  backward(loss(leaves));

  GradCheckResult result;
  std::mt19937_64 rng(seed);
  for (const auto& leaf : leaves) {
    const auto analytic = leaf.grad();
    std::vector<std::int64_t> indices(static_cast<std::size_t>(leaf.numel()));
    std::iota(indices.begin(), indices.end(), 0);
    if (max_elements_per_input > 0 && leaf.numel() > max_elements_per_input) {
      std::shuffle(indices.begin(), indices.end(), rng);
      indices.resize(static_cast<std::size_t>(max_elements_per_input));
      std::sort(indices.begin(), indices.end());
    }
    auto values = leaf.mutable_data();
    NoGradGuard no_grad;
    for (auto idx : indices) {
      const auto i = static_cast<std::size_t>(idx);
      const T original = values[i];
      values[i] = original + h;
      const T plus = loss(leaves).item();
      values[i] = original - h;
      const T minus = loss(leaves).item();
      values[i] = original;
      const double numeric = (static_cast<double>(plus) - static_cast<double>(minus)) / (2.0 * static_cast<double>(h));
      const double a = static_cast<double>(analytic[i]);
      result.max_abs_error = std::max(result.max_abs_error, std::abs(a - numeric));
      result.max_rel_error = std::max(result.max_rel_error, relative_error(a, numeric));
      ++result.checked;
    }
  }
  result.passed = result.max_rel_error <= tolerance;
  return result;
}

bool GradCheckReport::passed() const {
  return std::all_of(cases.begin(), cases.end(), [](const auto& c) { return c.result.passed; });
}

template Tensor<float> finite_diff_grad<float>(const std::function<float(const Tensor<float>&)>&,
                                               const Tensor<float>&, float);
template Tensor<double> finite_diff_grad<double>(const std::function<double(const Tensor<double>&)>&,
                                                 const Tensor<double>&, double);
template GradCheckResult check_gradients<float>(
    const std::function<Tensor<float>(const std::vector<Tensor<float>>&)>&, const std::vector<Tensor<float>>&,
    double, float, std::int64_t, std::uint64_t);
template GradCheckResult check_gradients<double>(
    const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>&, const std::vector<Tensor<double>>&,
    double, double, std::int64_t, std::uint64_t);

}  // namespace ccfpse
