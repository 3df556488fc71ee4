#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ccfpse/tensor.hpp"

namespace ccfpse {

/// Central-difference gradient of a scalar function:
///   g[i] = (f(x + h e_i) - f(x - h e_i)) / (2h).
/// `f` is evaluated with recording disabled and must be deterministic.
template <typename T>
Tensor<T> finite_diff_grad(const std::function<T(const Tensor<T>&)>& f, const Tensor<T>& x, T h);

/// |a - n| / max(|a|, |n|); both magnitudes below `floor` count as agreement.
double relative_error(double analytic, double numeric, double floor = 1e-10);

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::int64_t checked = 0;
  bool passed = true;
};

/// Compares autodiff against central differences for every input of a scalar
/// loss builder. If `max_elements_per_input` > 0, a seeded subset of entries
/// per input is probed instead of all of them.
template <typename T>
GradCheckResult check_gradients(const std::function<Tensor<T>(const std::vector<Tensor<T>>&)>& loss,
                                const std::vector<Tensor<T>>& inputs, double tolerance, T h = T(1e-6),
                                std::int64_t max_elements_per_input = 0, std::uint64_t seed = 0);

struct GradCheckCase {
  std::string name;
  GradCheckResult result;
  double tolerance = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckCase> cases;
  bool passed() const;
};

enum class GradCheckScope { kPrimitives, kConditionalOps, kEndToEnd };

GradCheckScope parse_gradcheck_scope(const std::string& name);

/// Finite-difference suite for a scope, run in 64-bit precision. With
/// `inject_fault`, an extra op with a deliberately wrong gradient rule is
/// checked so callers can confirm the suite detects failures.
GradCheckReport run_gradcheck_suite(GradCheckScope scope, std::uint64_t seed = 7, bool inject_fault = false);

}  // namespace ccfpse
