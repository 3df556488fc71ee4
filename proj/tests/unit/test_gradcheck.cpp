#include <gtest/gtest.h>

#include "ccfpse/gradcheck.hpp"
#include "ccfpse/ops.hpp"

using namespace ccfpse;

TEST(FiniteDiff, HandExamples) {
  const auto square = [](const Tensor<double>& x) { return x.data()[0] * x.data()[0]; };
  const auto g = finite_diff_grad<double>(square, Tensor<double>({1}, std::vector<double>{3.0}), 1e-3);
  EXPECT_NEAR(g.data()[0], 6.0, 1e-6);

  const auto total = [](const Tensor<double>& x) { return sum(x).item(); };
  const auto gs = finite_diff_grad<double>(total, Tensor<double>({4}, 0.7), 1e-4);
  for (double v : gs.data()) EXPECT_NEAR(v, 1.0, 1e-9);

  const auto lrelu = [](const Tensor<double>& x) { return sum(leaky_relu(x, 0.2)).item(); };
  const auto gl = finite_diff_grad<double>(lrelu, Tensor<double>({2}, std::vector<double>{-2.0, 2.0}), 1e-4);
  EXPECT_NEAR(gl.data()[0], 0.2, 1e-9);
  EXPECT_NEAR(gl.data()[1], 1.0, 1e-9);
}

TEST(RelativeError, Definition) {
  EXPECT_NEAR(relative_error(1.0, 1.1), 0.1 / 1.1, 1e-15);
  EXPECT_EQ(relative_error(0.0, 1e-12), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(-1.0, 1.0), 2.0);
}

TEST(CheckGradients, AcceptsCorrectRules) {
  Tensor<double> x({3}, std::vector<double>{0.3, -1.2, 2.0});
  const auto good = check_gradients<double>(
      [](const std::vector<Tensor<double>>& in) { return sum(mul(in[0], ccfpse::tanh(in[0]))); }, {x}, 1e-6);
  EXPECT_TRUE(good.passed);
  EXPECT_EQ(good.checked, 3);
}

TEST(Suites, AllScopesPass) {
  for (auto scope : {GradCheckScope::kPrimitives, GradCheckScope::kConditionalOps, GradCheckScope::kEndToEnd}) {
    const auto report = run_gradcheck_suite(scope);
    EXPECT_FALSE(report.cases.empty());
    for (const auto& c : report.cases) EXPECT_TRUE(c.result.passed) << c.name << " rel " << c.result.max_rel_error;
  }
}

TEST(Suites, InjectedFaultIsDetected) {
  const auto report = run_gradcheck_suite(GradCheckScope::kPrimitives, 7, true);
  EXPECT_FALSE(report.passed());
}

TEST(Suites, ScopeNames) {
  EXPECT_EQ(parse_gradcheck_scope("ccops"), GradCheckScope::kConditionalOps);
  EXPECT_THROW(parse_gradcheck_scope("everything"), ArgumentError);
}
