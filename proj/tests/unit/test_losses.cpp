#include <gtest/gtest.h>

#include "ccfpse/losses.hpp"
#include "ccfpse/ops.hpp"
#include "test_support.hpp"

using namespace ccfpse;
using ccfpse::testing::random_tensor;

namespace {
Tensor<double> s(double v) { return Tensor<double>::scalar(v); }
}  // namespace

TEST(HingeLoss, HandCases) {
  EXPECT_EQ(d_hinge_loss(s(2.0), s(-2.0)).item(), 0.0);
  EXPECT_EQ(d_hinge_loss(s(0.5), s(-2.0)).item(), 0.5);
  EXPECT_EQ(d_hinge_loss(s(2.0), s(0.0)).item(), 1.0);
}

TEST(HingeLoss, BatchMeanAndZeroCondition) {
  Tensor<double> real({2}, std::vector<double>{0.0, 2.0});
  Tensor<double> fake({2}, std::vector<double>{-3.0, 1.0});
  EXPECT_DOUBLE_EQ(d_hinge_loss(real, fake).item(), 0.5 + 1.0);
  Tensor<double> ok_real({2}, std::vector<double>{1.0, 4.0});
  Tensor<double> ok_fake({2}, std::vector<double>{-1.0, -7.0});
  EXPECT_EQ(d_hinge_loss(ok_real, ok_fake).item(), 0.0);
}

TEST(HingeLoss, NonNegativeOnRandomScores) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    auto r = random_tensor<double>({4}, rng, -5.0, 5.0);
    auto f = random_tensor<double>({4}, rng, -5.0, 5.0);
    ASSERT_GE(d_hinge_loss(r, f).item(), 0.0);
  }
}

TEST(GeneratorAdversarialLoss, HandCases) {
  EXPECT_EQ(g_adv_loss(s(0.0)).item(), 0.0);
  EXPECT_EQ(g_adv_loss(s(3.0)).item(), -3.0);
  EXPECT_EQ(g_adv_loss(s(-1.0)).item(), 1.0);
  EXPECT_DOUBLE_EQ(g_adv_loss(Tensor<double>({2}, std::vector<double>{1.0, 2.0})).item(), -1.5);
}

TEST(PerceptualLoss, ZeroOnIdenticalSymmetricPositiveOnPerturbed) {
  FixedFeatureExtractor<double> phi(3);
  std::mt19937_64 rng(2);
  auto x = random_tensor<double>({2, 3, 16, 16}, rng);
  auto y = random_tensor<double>({2, 3, 16, 16}, rng);
  EXPECT_EQ(perceptual_loss(x, x, phi).item(), 0.0);
  EXPECT_DOUBLE_EQ(perceptual_loss(x, y, phi).item(), perceptual_loss(y, x, phi).item());
  EXPECT_GT(perceptual_loss(add_scalar(x, 1e-3), x, phi).item(), 0.0);
  EXPECT_THROW(perceptual_loss(x, Tensor<double>({2, 3, 8, 8}), phi), DimensionError);
}

TEST(PerceptualLoss, GradientReachesFakeOnly) {
  FixedFeatureExtractor<double> phi(4);
  std::mt19937_64 rng(3);
  auto fake = random_tensor<double>({1, 3, 16, 16}, rng, -1.0, 1.0, true);
  auto real = random_tensor<double>({1, 3, 16, 16}, rng, -1.0, 1.0, true);
  backward(perceptual_loss(fake, real, phi));
  EXPECT_TRUE(fake.has_grad());
  EXPECT_FALSE(real.has_grad());
  for (const auto& p : phi.params().params()) {
    EXPECT_FALSE(p.tensor.requires_grad());
    EXPECT_FALSE(p.tensor.has_grad());
  }
}

TEST(FixedFeatureExtractor, SeedFixedStageTaps) {
  FixedFeatureExtractor<double> a(5), b(5);
  Tensor<double> x({1, 3, 32, 32}, 0.25);
  const auto fa = a.features(x), fb = b.features(x);
  ASSERT_EQ(fa.size(), 4u);
  EXPECT_EQ(fa[0].shape(), (Shape{1, 16, 16, 16}));
  EXPECT_EQ(fa[3].shape(), (Shape{1, 32, 2, 2}));
  for (std::size_t i = 0; i < fa.size(); ++i) EXPECT_EQ(ccfpse::testing::values(fa[i]), ccfpse::testing::values(fb[i]));
}

TEST(FeatureMatchingLoss, HandCasesAndContract) {
  Tensor<double> a({2}, std::vector<double>{1.0, 2.0});
  Tensor<double> b({2}, std::vector<double>{2.0, 2.0});
  EXPECT_DOUBLE_EQ(feature_matching_loss<double>({a}, {b}).item(), 0.5);
  EXPECT_EQ(feature_matching_loss<double>({a, b}, {a, b}).item(), 0.0);
  EXPECT_THROW(feature_matching_loss<double>({a}, {a, b}), ContractError);
  EXPECT_THROW(feature_matching_loss<double>({}, {}), ContractError);
}

TEST(FeatureMatchingLoss, NonNegativeAndDetachesReal) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 50; ++i) {
    auto f = random_tensor<double>({3, 2}, rng);
    auto r = random_tensor<double>({3, 2}, rng);
    ASSERT_GE(feature_matching_loss<double>({f}, {r}).item(), 0.0);
  }
  auto fake = random_tensor<double>({4}, rng, -1.0, 1.0, true);
  auto real = random_tensor<double>({4}, rng, -1.0, 1.0, true);
  backward(feature_matching_loss<double>({fake}, {real}));
  EXPECT_TRUE(fake.has_grad());
  EXPECT_FALSE(real.has_grad());
}

TEST(TotalGeneratorLoss, Arithmetic) {
  EXPECT_DOUBLE_EQ(g_total_loss(s(-1.0), s(0.2), s(0.1), LossWeights{10.0, 20.0}).item(), 3.0);
  EXPECT_EQ(g_total_loss(s(-0.7), s(0.2), s(0.1), LossWeights{0.0, 0.0}).item(), -0.7);
  EXPECT_EQ(g_total_loss(s(0.0), s(0.0), s(0.0), LossWeights{}).item(), 0.0);
  EXPECT_EQ(g_total_loss(s(1.5), Tensor<double>(), Tensor<double>(), LossWeights{}).item(), 1.5);
  EXPECT_THROW(g_total_loss(s(0.0), s(0.0), s(0.0), LossWeights{-1.0, 0.0}), ArgumentError);
}
