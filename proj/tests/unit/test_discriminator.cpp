#include <gtest/gtest.h>

#include <cmath>

#include "ccfpse/discriminator.hpp"
#include "ccfpse/ops.hpp"
#include "test_support.hpp"

using namespace ccfpse;
using ccfpse::testing::random_labels;
using ccfpse::testing::random_tensor;
using ccfpse::testing::values;

namespace {

DiscriminatorConfig small_config() {
  DiscriminatorConfig c;
  c.widths = {6, 8, 8, 8};
  c.fpn_channels = 8;
  return c;
}

double mean_of(const Tensor<double>& t, std::int64_t n) {
  const auto per = t.numel() / t.dim(0);
  double s = 0.0;
  for (std::int64_t i = 0; i < per; ++i) s += t.data()[static_cast<std::size_t>(n * per + i)];
  return s / static_cast<double>(per);
}

}  // namespace

TEST(SemanticScore, HandCases) {
  Tensor<double> f({1, 2, 1, 1}, std::vector<double>{1.0, 2.0});
  Tensor<double> table({2, 2}, std::vector<double>{0.5, 0.5, 2.0, -1.0});
  std::vector<LabelMap> y0{LabelMap(1, 1, 2, 0)}, y1{LabelMap(1, 1, 2, 1)};
  EXPECT_DOUBLE_EQ(semantic_score(f, y0, table).item(), 1.5);
  EXPECT_DOUBLE_EQ(semantic_score(f, y1, table).item(), 0.0);  // orthogonal
  std::vector<LabelMap> bad{LabelMap(1, 1, 3, 2)};
  EXPECT_THROW(semantic_score(f, bad, table), DataError);
  EXPECT_THROW(semantic_score(f, y0, Tensor<double>({2, 3})), DimensionError);
}

TEST(SemanticScore, DownsamplesLabelsToFeatureExtents) {
  Tensor<double> f({1, 1, 2, 2}, 1.0);
  Tensor<double> table({2, 1}, std::vector<double>{10.0, 20.0});
  LabelMap y(4, 4, 2, 0);
  y.set(2, 2, 1);  // read by cell (1,1)
  y.set(0, 1, 1);  // never read
  std::vector<LabelMap> ys{y};
  EXPECT_EQ(values(semantic_score(f, ys, table)), (std::vector<double>{10, 10, 10, 20}));
}

TEST(Discriminator, ShapeContractAt32) {
  Discriminator<float> d(DiscriminatorConfig{}, 5, 3, 1);
  std::mt19937_64 rng(1);
  std::vector<LabelMap> labels{random_labels(32, 32, 5, rng), random_labels(32, 32, 5, rng)};
  const auto out = d.forward(random_tensor<float>({2, 3, 32, 32}, rng), labels);
  ASSERT_EQ(out.patch_scores.size(), 3u);
  EXPECT_EQ(out.patch_scores[0].shape(), (Shape{2, 1, 4, 4}));
  EXPECT_EQ(out.patch_scores[1].shape(), (Shape{2, 1, 2, 2}));
  EXPECT_EQ(out.patch_scores[2].shape(), (Shape{2, 1, 1, 1}));
  ASSERT_EQ(out.semantic_scores.size(), 3u);
  EXPECT_EQ(out.semantic_scores[0].shape(), (Shape{2, 1, 4, 4}));
  EXPECT_EQ(out.total.shape(), (Shape{2}));
  EXPECT_EQ(out.features.size(), 5u + 3u);
  EXPECT_EQ(d.embedding_tables().size(), 3u);
}

TEST(Discriminator, TotalIsMeanOfPatchPlusSemantic) {
  Discriminator<double> d(small_config(), 4, 3, 2);
  std::mt19937_64 rng(2);
  std::vector<LabelMap> labels{random_labels(16, 16, 4, rng), random_labels(16, 16, 4, rng)};
  const auto out = d.forward(random_tensor<double>({2, 3, 16, 16}, rng), labels);
  for (std::int64_t n = 0; n < 2; ++n) {
    double expect = 0.0;
    for (int i = 0; i < 3; ++i) expect += mean_of(out.patch_scores[static_cast<std::size_t>(i)], n) +
                                          mean_of(out.semantic_scores[static_cast<std::size_t>(i)], n);
    EXPECT_NEAR(out.total.data()[static_cast<std::size_t>(n)], expect / 3.0, 1e-12);
  }
}

TEST(Discriminator, ZeroTablesLeavePatchScoreOnly) {
  Discriminator<double> d(small_config(), 4, 3, 3);
  for (const auto& t : d.embedding_tables()) {
    for (auto& v : t.mutable_data()) v = 0.0;
  }
  std::mt19937_64 rng(3);
  std::vector<LabelMap> labels{random_labels(16, 16, 4, rng)};
  const auto out = d.forward(random_tensor<double>({1, 3, 16, 16}, rng), labels);
  double patch = 0.0;
  for (const auto& p : out.patch_scores) patch += mean_of(p, 0);
  EXPECT_NEAR(out.total.item(), patch / 3.0, 1e-12);
  for (const auto& m : out.semantic_scores)
    for (double v : m.data()) EXPECT_EQ(v, 0.0);
}

TEST(Discriminator, LabelSwapChangesOnlySemanticScores) {
  Discriminator<double> d(small_config(), 4, 3, 4);
  std::mt19937_64 rng(4);
  auto image = random_tensor<double>({2, 3, 16, 16}, rng);
  std::vector<LabelMap> labels{random_labels(16, 16, 4, rng), random_labels(16, 16, 4, rng)};
  std::vector<LabelMap> swapped{labels[1], labels[0]};
  const auto a = d.forward(image, labels), b = d.forward(image, swapped);
  for (std::size_t i = 0; i < a.patch_scores.size(); ++i) EXPECT_EQ(values(a.patch_scores[i]), values(b.patch_scores[i]));
  bool changed = false;
  for (std::size_t i = 0; i < a.semantic_scores.size(); ++i) changed |= values(a.semantic_scores[i]) != values(b.semantic_scores[i]);
  EXPECT_TRUE(changed);
}

TEST(Discriminator, SemanticScoreIsLinearInTable) {
  Discriminator<double> d(small_config(), 4, 3, 5);
  std::mt19937_64 rng(5);
  auto image = random_tensor<double>({1, 3, 16, 16}, rng);
  std::vector<LabelMap> labels{random_labels(16, 16, 4, rng)};
  const auto a = d.forward(image, labels);
  const double alpha = -2.5;
  for (const auto& t : d.embedding_tables()) {
    for (auto& v : t.mutable_data()) v *= alpha;
  }
  const auto b = d.forward(image, labels);
  for (std::size_t i = 0; i < a.semantic_scores.size(); ++i) {
    for (std::int64_t k = 0; k < a.semantic_scores[i].numel(); ++k) {
      EXPECT_NEAR(b.semantic_scores[i].data()[static_cast<std::size_t>(k)],
                  alpha * a.semantic_scores[i].data()[static_cast<std::size_t>(k)], 1e-12);
    }
  }
}

TEST(Discriminator, EmbeddingsReceiveGradient) {
  Discriminator<double> d(small_config(), 4, 3, 6);
  std::mt19937_64 rng(6);
  std::vector<LabelMap> labels{random_labels(16, 16, 4, rng)};
  d.params().zero_grad();
  backward(sum(d.forward(random_tensor<double>({1, 3, 16, 16}, rng), labels).total));
  for (const auto& t : d.embedding_tables()) {
    double norm = 0.0;
    for (double g : t.grad()) norm += g * g;
    EXPECT_GT(norm, 0.0);
  }
}

TEST(Discriminator, DeterministicGivenSeed) {
  Discriminator<double> a(small_config(), 4, 3, 7), b(small_config(), 4, 3, 7);
  std::mt19937_64 rng(7);
  auto image = random_tensor<double>({1, 3, 16, 16}, rng);
  std::vector<LabelMap> labels{random_labels(16, 16, 4, rng)};
  EXPECT_EQ(values(a.forward(image, labels).total), values(b.forward(image, labels).total));
}

TEST(Discriminator, EmbeddingsOffDropsSemanticBranch) {
  auto cfg = small_config();
  cfg.embeddings = false;
  Discriminator<double> d(cfg, 4, 3, 8);
  EXPECT_TRUE(d.embedding_tables().empty());
  std::mt19937_64 rng(8);
  std::vector<LabelMap> labels{random_labels(16, 16, 4, rng)};
  const auto out = d.forward(random_tensor<double>({1, 3, 16, 16}, rng), labels);
  EXPECT_TRUE(out.semantic_scores.empty());
  double patch = 0.0;
  for (const auto& p : out.patch_scores) patch += mean_of(p, 0);
  EXPECT_NEAR(out.total.item(), patch / 3.0, 1e-12);
}

TEST(Discriminator, MultiScalePatchVariant) {
  auto cfg = small_config();
  cfg.variant = DiscriminatorVariant::kMultiScalePatch;
  Discriminator<double> d(cfg, 4, 3, 9);
  EXPECT_EQ(d.scales(), 2);
  std::mt19937_64 rng(9);
  std::vector<LabelMap> labels{random_labels(16, 16, 4, rng)};
  const auto out = d.forward(random_tensor<double>({1, 3, 16, 16}, rng), labels);
  ASSERT_EQ(out.patch_scores.size(), 2u);
  EXPECT_EQ(out.patch_scores[0].shape(), (Shape{1, 1, 2, 2}));
  EXPECT_EQ(out.patch_scores[1].shape(), (Shape{1, 1, 1, 1}));
  EXPECT_NEAR(out.total.item(), (mean_of(out.patch_scores[0], 0) + mean_of(out.patch_scores[1], 0)) / 2.0, 1e-12);
}

TEST(Discriminator, Errors) {
  Discriminator<double> d(small_config(), 4, 3, 10);
  std::mt19937_64 rng(10);
  std::vector<LabelMap> labels{random_labels(16, 16, 4, rng)};
  EXPECT_THROW(d.forward(Tensor<double>({1, 3, 12, 12}), labels), ArgumentError);
  EXPECT_THROW(d.forward(Tensor<double>({1, 2, 16, 16}), labels), DimensionError);
  EXPECT_THROW(d.forward(Tensor<double>({2, 3, 16, 16}), labels), DimensionError);
  std::vector<LabelMap> wrong{random_labels(16, 16, 5, rng)};
  EXPECT_THROW(d.forward(Tensor<double>({1, 3, 16, 16}), wrong), DataError);
  auto bad = small_config();
  bad.widths = {8, 8};
  EXPECT_THROW(Discriminator<double>(bad, 4, 3, 1), ArgumentError);
}
