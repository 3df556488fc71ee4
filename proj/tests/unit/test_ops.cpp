#include <gtest/gtest.h>

#include <cmath>

#include "ccfpse/ops.hpp"
#include "test_support.hpp"

using namespace ccfpse;
using ccfpse::testing::random_tensor;

namespace {

// Direct seven-loop cross-correlation, independent of the GEMM path.
std::vector<double> conv_oracle(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b, int stride,
                                int pad) {
  const auto n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const auto d = w.dim(0), k = w.dim(2);
  const auto ho = (h + 2 * pad - k) / stride + 1, wo = (wd + 2 * pad - k) / stride + 1;
  std::vector<double> out(static_cast<std::size_t>(n * d * ho * wo), 0.0);
  for (std::int64_t s = 0; s < n; ++s)
    for (std::int64_t o = 0; o < d; ++o)
      for (std::int64_t i = 0; i < ho; ++i)
        for (std::int64_t j = 0; j < wo; ++j) {
          double acc = b.defined() ? b.data()[o] : 0.0;
          for (std::int64_t ci = 0; ci < c; ++ci)
            for (std::int64_t m = 0; m < k; ++m)
              for (std::int64_t q = 0; q < k; ++q) {
                const auto yi = i * stride + m - pad, xj = j * stride + q - pad;
                if (yi < 0 || yi >= h || xj < 0 || xj >= wd) continue;
                acc += x.at({s, ci, yi, xj}) * w.at({o, ci, m, q});
              }
          out[static_cast<std::size_t>(((s * d + o) * ho + i) * wo + j)] = acc;
        }
  return out;
}

}  // namespace

TEST(Conv2d, MatchesDirectOracle) {
  std::mt19937_64 rng(3);
  struct Case {
    int n, c, d, h, w, k, stride, pad;
  };
  for (const Case cs : {Case{1, 1, 1, 5, 5, 3, 1, 1}, Case{2, 3, 4, 6, 7, 3, 2, 1}, Case{1, 2, 3, 8, 8, 1, 1, 0},
                        Case{2, 2, 2, 5, 4, 5, 1, 2}, Case{1, 4, 2, 9, 9, 3, 2, 0}}) {
    auto x = random_tensor<double>({cs.n, cs.c, cs.h, cs.w}, rng);
    auto w = random_tensor<double>({cs.d, cs.c, cs.k, cs.k}, rng);
    auto b = random_tensor<double>({cs.d}, rng);
    const auto y = conv2d(x, w, b, cs.stride, cs.pad);
    const auto expect = conv_oracle(x, w, b, cs.stride, cs.pad);
    ASSERT_EQ(static_cast<std::size_t>(y.numel()), expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(y.data()[i], expect[i], 1e-12);
  }
}

TEST(Conv2d, UnbatchedKeepsRank) {
  std::mt19937_64 rng(4);
  auto x = random_tensor<float>({2, 4, 4}, rng);
  auto w = random_tensor<float>({3, 2, 3, 3}, rng);
  const auto y = conv2d(x, w, Tensor<float>(), 1, 1);
  EXPECT_EQ(y.shape(), (Shape{3, 4, 4}));
}

TEST(Conv2d, Errors) {
  Tensor<float> x({1, 2, 4, 4});
  EXPECT_THROW(conv2d(x, Tensor<float>({3, 3, 3, 3}), Tensor<float>(), 1, 1), DimensionError);
  EXPECT_THROW(conv2d(x, Tensor<float>({3, 2, 3, 3}), Tensor<float>({2}), 1, 1), DimensionError);
  EXPECT_THROW(conv2d(x, Tensor<float>({3, 2, 3, 3}), Tensor<float>(), 0, 1), ArgumentError);
  EXPECT_THROW(conv2d(x, Tensor<float>({3, 2, 7, 7}), Tensor<float>(), 1, 1), ArgumentError);
  EXPECT_THROW(conv2d(Tensor<float>({4, 4}), Tensor<float>({3, 2, 3, 3}), Tensor<float>(), 1, 1), DimensionError);
}

TEST(Conv2d, MacCounter) {
  Tensor<float> x({2, 3, 8, 8});
  Tensor<float> w({5, 3, 3, 3});
  reset_mac_count();
  conv2d(x, w, Tensor<float>(), 1, 1);
  EXPECT_EQ(mac_count(), 2 * 5 * 3 * 9 * 8 * 8);
}

TEST(PointwiseConv, EqualsOneByOneConv) {
  std::mt19937_64 rng(5);
  auto x = random_tensor<double>({2, 3, 4, 5}, rng);
  auto w = random_tensor<double>({4, 3}, rng);
  auto b = random_tensor<double>({4}, rng);
  const auto y = pointwise_conv(x, w, b);
  const auto ref = conv2d(x, reshape(w, {4, 3, 1, 1}), b, 1, 0);
  ASSERT_EQ(y.shape(), ref.shape());
  for (std::int64_t i = 0; i < y.numel(); ++i) EXPECT_NEAR(y.data()[i], ref.data()[i], 1e-12);
  EXPECT_THROW(pointwise_conv(x, Tensor<double>({4, 2}), Tensor<double>()), DimensionError);
}

TEST(Elementwise, Values) {
  Tensor<double> a({4}, std::vector<double>{-2.0, -0.5, 0.0, 3.0});
  Tensor<double> b({4}, std::vector<double>{1.0, 2.0, 3.0, 4.0});
  EXPECT_EQ(ccfpse::testing::values(add(a, b)), (std::vector<double>{-1.0, 1.5, 3.0, 7.0}));
  EXPECT_EQ(ccfpse::testing::values(sub(a, b)), (std::vector<double>{-3.0, -2.5, -3.0, -1.0}));
  EXPECT_EQ(ccfpse::testing::values(mul(a, b)), (std::vector<double>{-2.0, -1.0, 0.0, 12.0}));
  EXPECT_EQ(ccfpse::testing::values(relu(a)), (std::vector<double>{0.0, 0.0, 0.0, 3.0}));
  EXPECT_EQ(ccfpse::testing::values(leaky_relu(a, 0.2)), (std::vector<double>{-0.4, -0.1, 0.0, 3.0}));
  EXPECT_EQ(ccfpse::testing::values(abs(a)), (std::vector<double>{2.0, 0.5, 0.0, 3.0}));
  EXPECT_DOUBLE_EQ(sigmoid(a).data()[2], 0.5);
  EXPECT_DOUBLE_EQ(ccfpse::tanh(a).data()[3], std::tanh(3.0));
  EXPECT_THROW(add(a, Tensor<double>({3})), DimensionError);
}

TEST(Elementwise, AbsSubgradientAtZeroIsZero) {
  Tensor<double> a({2}, std::vector<double>{0.0, -1.0}, true);
  backward(sum(abs(a)));
  EXPECT_DOUBLE_EQ(a.grad()[0], 0.0);
  EXPECT_DOUBLE_EQ(a.grad()[1], -1.0);
}

TEST(Resample, UpsampleThenPoolIsIdentity) {
  std::mt19937_64 rng(6);
  auto x = random_tensor<double>({2, 3, 3, 4}, rng);
  const auto up = upsample_nearest(x, 2);
  EXPECT_EQ(up.shape(), (Shape{2, 3, 6, 8}));
  EXPECT_DOUBLE_EQ(up.at({1, 2, 5, 7}), x.at({1, 2, 2, 3}));
  const auto back = avg_pool(up, 2);
  for (std::int64_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(back.data()[i], x.data()[i], 1e-15);
  EXPECT_THROW(avg_pool(x, 2), DimensionError);
}

TEST(Concat, ChannelsInOrder) {
  Tensor<float> a({1, 1, 1, 2}, std::vector<float>{1, 2});
  Tensor<float> b({1, 2, 1, 2}, std::vector<float>{3, 4, 5, 6});
  const auto c = concat_channels<float>({a, b});
  EXPECT_EQ(c.shape(), (Shape{1, 3, 1, 2}));
  EXPECT_EQ(ccfpse::testing::values(c), (std::vector<float>{1, 2, 3, 4, 5, 6}));
  EXPECT_THROW(concat_channels<float>({a, Tensor<float>({1, 1, 2, 2})}), DimensionError);
}

TEST(Reductions, SumMeanSampleMean) {
  Tensor<double> x({2, 2}, std::vector<double>{1.0, 2.0, 3.0, 6.0});
  EXPECT_DOUBLE_EQ(sum(x).item(), 12.0);
  EXPECT_DOUBLE_EQ(mean(x).item(), 3.0);
  EXPECT_EQ(ccfpse::testing::values(sample_mean(x)), (std::vector<double>{1.5, 4.5}));
}

TEST(ChannelDot, InnerProductPerLocation) {
  Tensor<double> a({1, 2, 1, 2}, std::vector<double>{1.0, 2.0, 3.0, 4.0});
  Tensor<double> b({1, 2, 1, 2}, std::vector<double>{0.5, -1.0, 2.0, 0.25});
  const auto c = channel_dot(a, b);
  EXPECT_EQ(c.shape(), (Shape{1, 1, 1, 2}));
  EXPECT_DOUBLE_EQ(c.data()[0], 0.5 + 6.0);
  EXPECT_DOUBLE_EQ(c.data()[1], -2.0 + 1.0);
}

TEST(Embedding, GathersRowsAndRejectsBadIds) {
  Tensor<double> table({3, 2}, std::vector<double>{0, 1, 10, 11, 20, 21});
  const std::vector<std::int32_t> ids{2, 0, 1, 2};
  const auto e = embedding_lookup(table, ids, 1, 2, 2);
  EXPECT_EQ(e.shape(), (Shape{1, 2, 2, 2}));
  EXPECT_EQ(ccfpse::testing::values(e), (std::vector<double>{20, 0, 10, 20, 21, 1, 11, 21}));
  const std::vector<std::int32_t> bad{0, 3, 0, 0};
  EXPECT_THROW(embedding_lookup(table, bad, 1, 2, 2), DataError);
  EXPECT_THROW(embedding_lookup(table, ids, 1, 2, 3), DimensionError);
}

TEST(Conv2d, OnesKernelCountsCoveredNeighbours) {
  Tensor<double> x({1, 1, 3, 3}, 1.0);
  Tensor<double> w({1, 1, 3, 3}, 1.0);
  const auto y = conv2d(x, w, Tensor<double>({1}, 0.0), 1, 1);
  EXPECT_EQ(ccfpse::testing::values(y), (std::vector<double>{4, 6, 4, 6, 9, 6, 4, 6, 4}));
}

TEST(Conv2d, CenteredOneHotKernelIsIdentity) {
  std::mt19937_64 rng(9);
  for (int k : {1, 3, 5}) {
    auto x = random_tensor<double>({1, 1, 5, 5}, rng);
    Tensor<double> w({1, 1, k, k}, 0.0);
    w.mutable_data()[static_cast<std::size_t>((k / 2) * k + k / 2)] = 1.0;
    EXPECT_EQ(ccfpse::testing::values(conv2d(x, w, Tensor<double>(), 1, k / 2)), ccfpse::testing::values(x));
  }
}

TEST(Conv2d, BiasOnly) {
  const auto y = conv2d(Tensor<double>({1, 1, 2, 2}, 0.0), Tensor<double>({1, 1, 3, 3}, 1.0),
                        Tensor<double>({1}, 5.0), 1, 1);
  for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 5.0);
}

TEST(PointwiseConv, HandCases) {
  Tensor<double> x({2, 1, 1}, std::vector<double>{3.0, 4.0});
  EXPECT_DOUBLE_EQ(pointwise_conv(x, Tensor<double>({1, 2}, 1.0), Tensor<double>({1}, 0.0)).item(), 7.0);
  std::mt19937_64 rng(10);
  auto y = random_tensor<double>({2, 3, 3}, rng);
  Tensor<double> eye({2, 2}, std::vector<double>{1, 0, 0, 1});
  EXPECT_EQ(ccfpse::testing::values(pointwise_conv(y, eye, Tensor<double>())), ccfpse::testing::values(y));
}

TEST(PointwiseConv, BitEqualToConvWithUnitKernel) {
  std::mt19937_64 rng(11);
  auto x = random_tensor<float>({2, 2, 2}, rng);
  auto w = random_tensor<float>({3, 2}, rng);
  auto b = random_tensor<float>({3}, rng);
  EXPECT_EQ(ccfpse::testing::values(pointwise_conv(x, w, b)),
            ccfpse::testing::values(conv2d(x, reshape(w, {3, 2, 1, 1}), b, 1, 0)));
}

TEST(Elementwise, LeakyReluGradient) {
  Tensor<double> x({1}, std::vector<double>{-1.0}, true);
  auto y = leaky_relu(x, 0.2);
  EXPECT_DOUBLE_EQ(y.item(), -0.2);
  backward(sum(y));
  EXPECT_DOUBLE_EQ(x.grad()[0], 0.2);
}

TEST(Resample, UpsampleHandCaseAndGradient) {
  Tensor<double> x({1, 2, 2}, std::vector<double>{1, 2, 3, 4}, true);
  const auto y = upsample_nearest(x, 2);
  EXPECT_EQ(ccfpse::testing::values(y),
            (std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4}));
  EXPECT_EQ(ccfpse::testing::values(upsample_nearest(x, 1)), ccfpse::testing::values(x));
  backward(sum(y));
  for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 4.0);
}

TEST(Autograd, HandExamples) {
  Tensor<double> x = Tensor<double>::scalar(3.0, true);
  backward(mul(x, x));
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
  Tensor<double> a({2}, std::vector<double>{1, 2}, true);
  Tensor<double> b({2}, std::vector<double>{3, 4}, true);
  backward(sum(mul(a, b)));
  EXPECT_EQ(std::vector<double>(a.grad().begin(), a.grad().end()), (std::vector<double>{3, 4}));
  EXPECT_EQ(std::vector<double>(b.grad().begin(), b.grad().end()), (std::vector<double>{1, 2}));
}
