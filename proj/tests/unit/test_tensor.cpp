#include <gtest/gtest.h>

#include "ccfpse/ops.hpp"
#include "ccfpse/tensor.hpp"
#include "test_support.hpp"

using namespace ccfpse;

TEST(Tensor, ShapeAndValues) {
  Tensor<float> t({2, 3}, std::vector<float>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.rank(), 2);
  EXPECT_EQ(t.numel(), 6);
  EXPECT_EQ(t.dim(-1), 3);
  EXPECT_FLOAT_EQ(t.at({1, 2}), 6.0f);
  EXPECT_THROW(t.at({2, 0}), DimensionError);
  EXPECT_THROW(t.dim(2), DimensionError);
  EXPECT_THROW(Tensor<float>({2, 2}, std::vector<float>{1, 2, 3}), DimensionError);
  EXPECT_THROW(Tensor<float>({-1}), DimensionError);
  EXPECT_THROW(t.item(), ContractError);
}

TEST(Tensor, CopiesShareStorageDetachDoesNot) {
  Tensor<float> a({2}, std::vector<float>{1, 2});
  Tensor<float> b = a;
  b.mutable_data()[0] = 9;
  EXPECT_FLOAT_EQ(a.data()[0], 9.0f);
  Tensor<float> c = a.detach();
  c.mutable_data()[0] = 3;
  EXPECT_FLOAT_EQ(a.data()[0], 9.0f);
  EXPECT_TRUE(c.is_leaf());
  EXPECT_FALSE(c.requires_grad());
}

TEST(Tensor, UndefinedTensorRaises) {
  Tensor<float> t;
  EXPECT_FALSE(t.defined());
  EXPECT_THROW(t.shape(), StateError);
}

TEST(Autograd, ProductRuleOnSharedInput) {
  // y = sum(x * x + x) -> dy/dx = 2x + 1
  Tensor<double> x({3}, std::vector<double>{1.0, -2.0, 0.5}, true);
  auto y = sum(add(mul(x, x), x));
  backward(y);
  const auto g = x.grad();
  EXPECT_DOUBLE_EQ(g[0], 3.0);
  EXPECT_DOUBLE_EQ(g[1], -3.0);
  EXPECT_DOUBLE_EQ(g[2], 2.0);
}

TEST(Autograd, LeafGradsAccumulateAcrossBackwardCalls) {
  Tensor<double> x({2}, std::vector<double>{1.0, 2.0}, true);
  backward(sum(scale(x, 3.0)));
  backward(sum(scale(x, 3.0)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
  x.zero_grad();
  EXPECT_DOUBLE_EQ(x.grad()[1], 0.0);
}

TEST(Autograd, NonScalarLossIsContractError) {
  Tensor<double> x({2}, std::vector<double>{1.0, 2.0}, true);
  EXPECT_THROW(backward(scale(x, 2.0)), ContractError);
}

TEST(Autograd, DisconnectedLossIsContractError) {
  Tensor<double> x({2}, std::vector<double>{1.0, 2.0});
  EXPECT_THROW(backward(sum(x)), ContractError);
}

TEST(Autograd, NoGradGuardSkipsRecording) {
  Tensor<double> x({2}, std::vector<double>{1.0, 2.0}, true);
  {
    NoGradGuard guard;
    EXPECT_FALSE(grad_enabled());
    auto y = sum(x);
    EXPECT_FALSE(y.requires_grad());
    EXPECT_TRUE(y.is_leaf());
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_TRUE(sum(x).requires_grad());
}

TEST(Autograd, TapeOrderAndClear) {
  Tensor<double> x({2}, std::vector<double>{1.0, 2.0}, true);
  auto y = sum(mul(x, x));
  Tape<double> tape(y);
  EXPECT_EQ(tape.size(), 2u);
  tape.backward();
  EXPECT_DOUBLE_EQ(x.grad()[1], 4.0);
  tape.clear();
  EXPECT_EQ(tape.size(), 0u);
  EXPECT_THROW(tape.backward(), ContractError);
}

TEST(Autograd, RequiresGradOnlyOnLeaves) {
  Tensor<double> x({2}, 1.0, true);
  auto y = scale(x, 2.0);
  EXPECT_THROW(y.set_requires_grad(false), ContractError);
}

TEST(Autograd, DeepChainDoesNotOverflowStack) {
  Tensor<double> x({1}, std::vector<double>{1.0}, true);
  Tensor<double> y = x;
  for (int i = 0; i < 5000; ++i) y = add_scalar(y, 0.0);
  backward(sum(y));
  EXPECT_DOUBLE_EQ(x.grad()[0], 1.0);
}
