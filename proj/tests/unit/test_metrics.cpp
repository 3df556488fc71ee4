#include <gtest/gtest.h>

#include "ccfpse/metrics.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace ccfpse;
using ccfpse::testing::random_labels;

TEST(Miou, IdenticalMapsScoreOne) {
  std::mt19937_64 rng(1);
  const auto m = random_labels(8, 8, 4, rng);
  const auto r = compute_miou(m, m, 4);
  EXPECT_EQ(r.miou, 1.0);
  EXPECT_EQ(r.accuracy, 1.0);
}

TEST(Miou, HandCase) {
  LabelMap gt(1, 4, 2, std::vector<std::int32_t>{0, 0, 1, 1});
  LabelMap pred(1, 4, 2, std::vector<std::int32_t>{0, 1, 1, 1});
  const auto r = compute_miou(pred, gt, 2);
  EXPECT_DOUBLE_EQ(*r.per_class_iou[0], 0.5);
  EXPECT_DOUBLE_EQ(*r.per_class_iou[1], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.miou, 7.0 / 12.0);
  EXPECT_DOUBLE_EQ(r.accuracy, 0.75);
}

TEST(Miou, DisjointScoresZero) {
  const auto r = compute_miou(LabelMap(4, 4, 2, 1), LabelMap(4, 4, 2, 0), 2);
  EXPECT_EQ(r.miou, 0.0);
  EXPECT_EQ(r.accuracy, 0.0);
}

TEST(Miou, AbsentClassesAreSkipped) {
  const auto r = compute_miou(LabelMap(2, 2, 3, 0), LabelMap(2, 2, 3, 0), 3);
  EXPECT_FALSE(r.per_class_iou[2].has_value());
  EXPECT_EQ(r.miou, 1.0);
}

TEST(Miou, MatchesDirectCountingOracle) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 100; ++t) {
    const int l = 2 + static_cast<int>(rng() % 5);
    const auto pred = random_labels(8, 8, l, rng), gt = random_labels(8, 8, l, rng);
    const auto r = compute_miou(pred, gt, l);
    const auto o = ccfpse::testing::iou_oracle({pred}, {gt}, l);
    ASSERT_EQ(r.miou, o.miou);
    ASSERT_EQ(r.accuracy, o.accuracy);
    for (int c = 0; c < l; ++c) {
      const auto& v = r.per_class_iou[static_cast<std::size_t>(c)];
      ASSERT_EQ(v.has_value(), o.iou[static_cast<std::size_t>(c)] >= 0.0);
      if (v) ASSERT_EQ(*v, o.iou[static_cast<std::size_t>(c)]);
    }
  }
}

TEST(ConfusionMatrix, AccumulatesOverPairs) {
  std::mt19937_64 rng(3);
  std::vector<LabelMap> preds, gts;
  ConfusionMatrix cm(3);
  for (int i = 0; i < 5; ++i) {
    preds.push_back(random_labels(4, 6, 3, rng));
    gts.push_back(random_labels(4, 6, 3, rng));
    cm.add(preds.back(), gts.back());
  }
  EXPECT_EQ(cm.total(), 5 * 24);
  const auto o = ccfpse::testing::iou_oracle(preds, gts, 3);
  EXPECT_EQ(cm.metrics().miou, o.miou);
  EXPECT_EQ(cm.count(0, 0) + cm.count(1, 1) + cm.count(2, 2), static_cast<std::int64_t>(o.accuracy * 120 + 0.5));
}

TEST(ConfusionMatrix, Errors) {
  ConfusionMatrix cm(2);
  EXPECT_THROW(cm.add(LabelMap(2, 2, 2), LabelMap(2, 3, 2)), DimensionError);
  EXPECT_THROW(cm.add(LabelMap(2, 2, 3, 2), LabelMap(2, 2, 3, 0)), DataError);
  EXPECT_THROW(ConfusionMatrix(0), ArgumentError);
}

TEST(Metrics, BoundedOnRandomMaps) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 20; ++t) {
    const auto r = compute_miou(random_labels(8, 8, 5, rng), random_labels(8, 8, 5, rng), 5);
    EXPECT_GE(r.miou, 0.0);
    EXPECT_LE(r.miou, 1.0);
    EXPECT_GE(r.accuracy, 0.0);
    EXPECT_LE(r.accuracy, 1.0);
  }
}
