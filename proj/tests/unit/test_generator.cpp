#include <gtest/gtest.h>

#include <cmath>

#include "ccfpse/generator.hpp"
#include "ccfpse/ops.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace ccfpse;
using ccfpse::testing::random_tensor;
using ccfpse::testing::values;

namespace {

std::vector<BlockConditioning<double>> random_conditioning(const GeneratorConfig& cfg, std::int64_t n,
                                                           std::mt19937_64& rng) {
  std::vector<BlockConditioning<double>> out;
  for (const auto& b : block_layout(cfg)) {
    PredictedWeights<double> pw;
    pw.layer_id = b.id;
    pw.kernels = random_tensor<double>({n, b.in_channels, cfg.kernel_size, cfg.kernel_size, b.height, b.width}, rng);
    pw.attention = random_tensor<double>({n, b.out_channels, b.height, b.width}, rng, 0.05, 0.95);
    out.emplace_back(std::move(pw));
  }
  return out;
}

GeneratorConfig small_generator() {
  GeneratorConfig cfg;
  cfg.z_channels = 4;
  cfg.widths = {6, 6, 4};
  cfg.base_height = 2;
  cfg.base_width = 2;
  return cfg;
}

}  // namespace

TEST(ConditionalDepthwiseConv, MatchesFiveLoopOracle) {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> cdist(1, 4), hdist(1, 8), kdist(0, 2), ndist(1, 2);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = ndist(rng), c = cdist(rng), h = hdist(rng), w = hdist(rng), k = 2 * kdist(rng) + 1;
    auto x = random_tensor<double>({n, c, h, w}, rng);
    auto v = random_tensor<double>({n, c, k, k, h, w}, rng);
    const auto y = conditional_depthwise_conv(x, v);
    const auto ref = ccfpse::testing::cdw_oracle(x, v);
    ASSERT_EQ(y.shape(), x.shape());
    for (std::size_t i = 0; i < ref.size(); ++i) ASSERT_NEAR(y.data()[i], ref[i], 1e-12) << "trial " << trial;
  }
}

TEST(ConditionalDepthwiseConv, UnbatchedMatchesBatched) {
  std::mt19937_64 rng(22);
  auto x = random_tensor<double>({3, 4, 5}, rng);
  auto v = random_tensor<double>({3, 3, 3, 4, 5}, rng);
  const auto a = conditional_depthwise_conv(x, v);
  const auto b = conditional_depthwise_conv(reshape(x, {1, 3, 4, 5}), reshape(v, {1, 3, 3, 3, 4, 5}));
  EXPECT_EQ(a.shape(), (Shape{3, 4, 5}));
  EXPECT_EQ(values(a), values(b));
}

TEST(ConditionalDepthwiseConv, IdentityKernel) {
  std::mt19937_64 rng(23);
  auto x = random_tensor<double>({1, 2, 4, 4}, rng);
  Tensor<double> v({1, 2, 3, 3, 4, 4}, 0.0);
  auto d = v.mutable_data();
  for (int c = 0; c < 2; ++c)
    for (int p = 0; p < 16; ++p) d[static_cast<std::size_t>(((c * 3 + 1) * 3 + 1) * 16 + p)] = 1.0;
  EXPECT_EQ(values(conditional_depthwise_conv(x, v)), values(x));
}

TEST(ConditionalDepthwiseConv, OnesOnOnes) {
  const auto y = conditional_depthwise_conv(Tensor<double>({1, 1, 3, 3}, 1.0), Tensor<double>({1, 1, 3, 3, 3, 3}, 1.0));
  EXPECT_EQ(values(y), (std::vector<double>{4, 6, 4, 6, 9, 6, 4, 6, 4}));
}

TEST(ConditionalDepthwiseConv, KernelsVaryByLocation) {
  // Constant input; location (1,0) gets ones, (1,2) gets twos. Both have equal coverage.
  Tensor<double> x({1, 1, 3, 3}, 1.0);
  Tensor<double> v({1, 1, 3, 3, 3, 3}, 1.0);
  auto d = v.mutable_data();
  for (int m = 0; m < 9; ++m) d[static_cast<std::size_t>(m * 9 + 1 * 3 + 2)] = 2.0;
  const auto y = conditional_depthwise_conv(x, v);
  EXPECT_DOUBLE_EQ(y.at({0, 0, 1, 0}), 6.0);
  EXPECT_DOUBLE_EQ(y.at({0, 0, 1, 2}), 12.0);
}

TEST(ConditionalDepthwiseConv, Errors) {
  Tensor<double> x({1, 2, 4, 4});
  EXPECT_THROW(conditional_depthwise_conv(x, Tensor<double>({1, 2, 2, 2, 4, 4})), ArgumentError);
  EXPECT_THROW(conditional_depthwise_conv(x, Tensor<double>({1, 2, 3, 3, 4, 5})), DimensionError);
  EXPECT_THROW(conditional_depthwise_conv(x, Tensor<double>({1, 3, 3, 3, 4, 4})), DimensionError);
  EXPECT_THROW(conditional_depthwise_conv(x, Tensor<double>({1, 2, 3, 5, 4, 4})), DimensionError);
}

TEST(ConditionalDepthwiseConv, MacCount) {
  reset_mac_count();
  conditional_depthwise_conv(Tensor<float>({2, 3, 5, 6}), Tensor<float>({2, 3, 3, 3, 5, 6}));
  EXPECT_EQ(mac_count(), 2 * 3 * 9 * 5 * 6);
}

TEST(ConditionalAttention, HandCases) {
  Tensor<double> y({1, 1, 1, 1}, std::vector<double>{2.0});
  EXPECT_DOUBLE_EQ(conditional_attention(y, Tensor<double>({1, 1, 1, 1}, 0.5)).item(), 1.0);
  std::mt19937_64 rng(24);
  auto f = random_tensor<double>({2, 3, 2, 2}, rng);
  EXPECT_EQ(values(conditional_attention(f, Tensor<double>({2, 3, 2, 2}, 1.0))), values(f));
  const auto gated = conditional_attention(f, Tensor<double>({2, 3, 2, 2}, 0.0));
  for (double v : gated.data()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(conditional_attention(f, Tensor<double>({2, 3, 2, 1})), DimensionError);
}

TEST(CountConditionalParams, HandCase) {
  const auto c = count_conditional_params(8, 16, 3, 4, 4);
  EXPECT_EQ(c.kernel_count, 1152);
  EXPECT_EQ(c.attention_count, 256);
  EXPECT_EQ(c.conditional, 1408);
  EXPECT_EQ(c.naive, 18432);
  EXPECT_EQ(c.kernel_ratio, 16.0);
  EXPECT_EQ(count_conditional_params(8, 1, 3, 4, 4).kernel_ratio, 1.0);
  const auto tall = count_conditional_params(8, 16, 3, 8, 4);
  EXPECT_EQ(tall.conditional, 2 * c.conditional);
  EXPECT_EQ(tall.naive, 2 * c.naive);
  EXPECT_EQ(tall.kernel_ratio, c.kernel_ratio);
  EXPECT_THROW(count_conditional_params(0, 1, 3, 4, 4), ArgumentError);
}

TEST(BlockLayout, UpsampleFirstPlacesBlocksAtStageResolution) {
  GeneratorConfig cfg;  // 4x4 base, three stages
  const auto layout = block_layout(cfg);
  ASSERT_EQ(layout.size(), 6u);
  EXPECT_EQ(layout[0].height, 8);
  EXPECT_EQ(layout[0].level, 2);
  EXPECT_EQ(layout[5].height, 32);
  EXPECT_EQ(layout[5].level, 0);
  EXPECT_EQ(layout[2].in_channels, 64);
  EXPECT_EQ(layout[2].out_channels, 32);
  EXPECT_EQ(layout[3].in_channels, 32);
  cfg.stage_order = StageOrder::kBlocksFirst;
  const auto late = block_layout(cfg);
  EXPECT_EQ(late[0].height, 4);
  EXPECT_EQ(late[5].height, 16);
}

TEST(GeneratorConfig, Validation) {
  GeneratorConfig cfg;
  cfg.kernel_size = 4;
  EXPECT_THROW(cfg.validate(), ArgumentError);
  cfg = GeneratorConfig{};
  cfg.blocks_per_stage = 3;
  EXPECT_THROW(cfg.validate(), ArgumentError);
  cfg = GeneratorConfig{};
  cfg.widths = {8};
  EXPECT_THROW(cfg.validate(), ArgumentError);
}

TEST(Generator, DefaultOutputIs32x32AndBounded) {
  GeneratorConfig cfg;
  EXPECT_EQ(cfg.output_height(), 32);
  Generator<float> gen(cfg, 3);
  std::mt19937_64 rng(25);
  std::vector<BlockConditioning<float>> cond;
  for (const auto& b : gen.blocks()) {
    PredictedWeights<float> pw;
    pw.layer_id = b.id;
    pw.kernels = random_tensor<float>({2, b.in_channels, 3, 3, b.height, b.width}, rng);
    pw.attention = random_tensor<float>({2, b.out_channels, b.height, b.width}, rng, 0.0, 1.0);
    cond.emplace_back(std::move(pw));
  }
  const auto img = gen.forward(random_tensor<float>({2, 64, 4, 4}, rng, -3.0, 3.0), cond, Mode::kTrain);
  EXPECT_EQ(img.shape(), (Shape{2, 3, 32, 32}));
  for (float v : img.data()) EXPECT_LE(std::abs(v), 1.0f);
}

TEST(Generator, ZeroParamsAndNoiseGiveZeroImage) {
  auto cfg = small_generator();
  Generator<double> gen(cfg, 4);
  for (const auto& p : gen.params().params()) {
    for (auto& v : p.tensor.mutable_data()) v = 0.0;
  }
  std::mt19937_64 rng(26);
  const auto img = gen.forward(Tensor<double>({1, 4, 2, 2}, 0.0), random_conditioning(cfg, 1, rng), Mode::kTrain);
  for (double v : img.data()) EXPECT_EQ(v, 0.0);
}

TEST(Generator, ZeroPointwisePairPassesInputThrough) {
  auto cfg = small_generator();
  cfg.widths = {6, 6, 6};
  Generator<double> gen(cfg, 5);
  for (int id = 0; id < 2; ++id) {
    auto& bp = gen.block_params(id);
    for (auto& v : bp.pointwise_weight.mutable_data()) v = 0.0;
    for (auto& v : bp.pointwise_bias.mutable_data()) v = 0.0;
  }
  std::mt19937_64 rng(27);
  const auto cond = random_conditioning(cfg, 2, rng);
  auto x = random_tensor<double>({2, 6, 4, 4}, rng);
  EXPECT_EQ(values(gen.block_pair(0, x, cond, Mode::kTrain)), values(x));
  EXPECT_THROW(gen.block_pair(1, x, cond, Mode::kTrain), ArgumentError);
}

TEST(Generator, DeterministicGivenSeed) {
  auto cfg = small_generator();
  Generator<double> a(cfg, 6), b(cfg, 6);
  std::mt19937_64 r1(28), r2(28);
  const auto ca = random_conditioning(cfg, 2, r1), cb = random_conditioning(cfg, 2, r2);
  Tensor<double> z({2, 4, 2, 2}, 0.3);
  EXPECT_EQ(values(a.forward(z, ca, Mode::kTrain)), values(b.forward(z, cb, Mode::kTrain)));
}

TEST(Generator, ContractChecks) {
  auto cfg = small_generator();
  Generator<double> gen(cfg, 7);
  std::mt19937_64 rng(29);
  auto cond = random_conditioning(cfg, 1, rng);
  Tensor<double> z({1, 4, 2, 2}, 0.1);
  EXPECT_THROW(gen.forward(Tensor<double>({1, 3, 2, 2}), cond, Mode::kTrain), DimensionError);
  auto short_cond = cond;
  short_cond.pop_back();
  EXPECT_THROW(gen.forward(z, short_cond, Mode::kTrain), ContractError);
  std::swap(cond[0], cond[1]);
  EXPECT_THROW(gen.forward(z, cond, Mode::kTrain), ContractError);
  EXPECT_THROW(gen.forward(z, random_conditioning(cfg, 1, rng), Mode::kEval), StateError);
}

TEST(Generator, ModulationVariantRuns) {
  auto cfg = small_generator();
  cfg.variant = GeneratorVariant::kModulation;
  Generator<double> gen(cfg, 8);
  std::mt19937_64 rng(30);
  std::vector<BlockConditioning<double>> cond;
  for (const auto& b : gen.blocks()) {
    PredictedModulation<double> m;
    m.layer_id = b.id;
    m.gamma = random_tensor<double>({1, b.in_channels, b.height, b.width}, rng);
    m.beta = random_tensor<double>({1, b.in_channels, b.height, b.width}, rng);
    cond.emplace_back(std::move(m));
  }
  const auto img = gen.forward(Tensor<double>({1, 4, 2, 2}, 0.2), cond, Mode::kTrain);
  EXPECT_EQ(img.shape(), (Shape{1, 3, 8, 8}));
  EXPECT_THROW(gen.forward(Tensor<double>({1, 4, 2, 2}, 0.2), random_conditioning(cfg, 1, rng), Mode::kTrain),
               ContractError);
}
