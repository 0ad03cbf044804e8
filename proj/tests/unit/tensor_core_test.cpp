#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "sparsefuse/ops.hpp"

using namespace sparsefuse;

namespace {

Real dot(const FeatureMap& a, const FeatureMap& b) {
  Real s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
  return s;
}

}  // namespace

TEST(Conv2d, OnesKernelWindowSums) {
  FeatureMap x(1, 3, 3, 1.0);
  ConvParams p = ConvParams::zeros(1, 1, 3);
  std::fill(p.weight.begin(), p.weight.end(), 1.0);
  const FeatureMap y = conv2d(x, p);
  EXPECT_EQ(y.at(0, 1, 1), 9.0);
  EXPECT_EQ(y.at(0, 0, 0), 4.0);
  EXPECT_EQ(y.at(0, 0, 1), 6.0);
}

TEST(Conv2d, ZeroWeightsGiveBias) {
  Rng rng(1);
  const FeatureMap x = oracle::random_map(2, 4, 5, rng);
  ConvParams p = ConvParams::zeros(2, 3, 3);
  p.bias = {0.5, -1.0, 2.0};
  const FeatureMap y = conv2d(x, p);
  for (int c = 0; c < 3; ++c)
    for (Real v : y.channel(c)) EXPECT_EQ(v, p.bias[c]);
}

TEST(Conv2d, MatchesNestedLoopOracle) {
  Rng rng(2);
  for (int stride : {1, 2}) {
    const FeatureMap x = oracle::random_map(2, 5, 5, rng);
    const ConvParams p = oracle::random_conv(2, 3, 3, stride, rng);
    EXPECT_LE(oracle::max_abs_diff(conv2d(x, p), oracle::conv(x, p)), 1e-12);
  }
}

TEST(Conv2d, StrideExtentIsCeil) {
  Rng rng(3);
  const FeatureMap x = oracle::random_map(1, 7, 9, rng);
  const FeatureMap y = conv2d(x, oracle::random_conv(1, 1, 3, 2, rng));
  EXPECT_EQ(y.height(), 4);
  EXPECT_EQ(y.width(), 5);
}

TEST(Conv2d, ChannelMismatchThrows) {
  FeatureMap x(2, 4, 4);
  EXPECT_THROW(conv2d(x, ConvParams::zeros(3, 1, 3)), ConfigError);
}

TEST(Conv2d, BiasSplitIsBitwise) {
  Rng rng(4);
  const FeatureMap x = oracle::random_map(3, 6, 6, rng);
  const ConvParams p = oracle::random_conv(3, 2, 3, 1, rng);
  FeatureMap y = conv2d_no_bias(x, p);
  for (int c = 0; c < 2; ++c)
    for (Real& v : y.channel(c)) v += p.bias[c];
  EXPECT_EQ(y, conv2d(x, p));
}

TEST(Conv2d, GradientMatchesFiniteDifferences) {
  Rng rng(5);
  FeatureMap x = oracle::random_map(2, 5, 5, rng);
  ConvParams p = oracle::random_conv(2, 3, 3, 2, rng);
  const FeatureMap r = oracle::random_map(3, 3, 3, rng);
  ConvGrads g = ConvGrads::like(p);
  const FeatureMap dx = conv2d_backward(x, p, r, &g);
  const Real h = 1e-3;
  auto rel = [](Real a, Real n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8}); };
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Real v = x.data()[i];
    x.data()[i] = v + h;
    const Real lp = dot(conv2d(x, p), r);
    x.data()[i] = v - h;
    const Real lm = dot(conv2d(x, p), r);
    x.data()[i] = v;
    EXPECT_LT(rel(dx.data()[i], (lp - lm) / (2 * h)), 1e-4);
  }
  for (std::size_t i = 0; i < p.weight.size(); ++i) {
    const Real v = p.weight[i];
    p.weight[i] = v + h;
    const Real lp = dot(conv2d(x, p), r);
    p.weight[i] = v - h;
    const Real lm = dot(conv2d(x, p), r);
    p.weight[i] = v;
    EXPECT_LT(rel(g.weight[i], (lp - lm) / (2 * h)), 1e-4);
  }
  for (int o = 0; o < 3; ++o) {
    Real s = 0;
    for (Real v : r.channel(o)) s += v;
    EXPECT_NEAR(g.bias[o], s, 1e-12);
  }
}

TEST(DwConv2d, IdentityKernel) {
  Rng rng(6);
  const FeatureMap x = oracle::random_map(3, 4, 4, rng);
  ConvParams p = ConvParams::depthwise_zeros(3, 3);
  for (int c = 0; c < 3; ++c) p.weight[c * 9 + 4] = 1.0;
  EXPECT_EQ(dwconv2d(x, p), x);
}

TEST(DwConv2d, ChannelsAreIndependent) {
  Rng rng(7);
  const FeatureMap x = oracle::random_map(2, 4, 4, rng, 5.0, 9.0);
  ConvParams p = ConvParams::depthwise_zeros(2, 3);
  for (int i = 0; i < 9; ++i) p.weight[i] = 1.0;
  const FeatureMap y = dwconv2d(x, p);
  for (Real v : y.channel(1)) EXPECT_EQ(v, 0.0);
}

TEST(DwConv2d, ReducesToSingleChannelConv) {
  Rng rng(8);
  const FeatureMap x = oracle::random_map(3, 4, 4, rng);
  ConvParams p = ConvParams::depthwise_zeros(3, 3);
  for (Real& v : p.weight) v = rng.uniform(-1, 1);
  const FeatureMap y = dwconv2d(x, p);
  for (int c = 0; c < 3; ++c) {
    FeatureMap xc(1, 4, 4);
    std::copy(x.channel(c).begin(), x.channel(c).end(), xc.data().begin());
    ConvParams pc = ConvParams::zeros(1, 1, 3);
    std::copy(p.weight.begin() + c * 9, p.weight.begin() + c * 9 + 9, pc.weight.begin());
    const FeatureMap yc = oracle::conv(xc, pc);
    for (std::size_t i = 0; i < yc.size(); ++i) EXPECT_NEAR(y.channel(c)[i], yc.data()[i], 1e-12);
  }
}

TEST(BatchNorm, ZeroGammaZeroBetaIsZero) {
  Rng rng(9);
  const FeatureMap x = oracle::random_map(2, 3, 3, rng);
  for (bool training : {true, false}) {
    BatchNormParams p = BatchNormParams::init(2, 0.0);
    for (Real v : batchnorm2d(x, p, training).data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(BatchNorm, ConstantChannelGivesBeta) {
  FeatureMap x(1, 3, 3, 4.2);
  BatchNormParams p = BatchNormParams::init(1, 1.0);
  p.beta[0] = 0.3;
  for (Real v : batchnorm2d(x, p, true).data()) EXPECT_NEAR(v, 0.3, 1e-12);
}

TEST(BatchNorm, SmallGammaBoundsOutput) {
  Rng rng(10);
  const FeatureMap x = oracle::random_map(2, 3, 3, rng, -3, 3);
  BatchNormParams p = BatchNormParams::init(2, 0.01);
  const FeatureMap y = batchnorm2d(x, p, true);
  for (int c = 0; c < 2; ++c) {
    Real mean = 0, var = 0;
    for (Real v : x.channel(c)) mean += v;
    mean /= 9;
    for (Real v : x.channel(c)) var += (v - mean) * (v - mean);
    var /= 9;
    Real max_norm = 0;
    for (Real v : x.channel(c)) max_norm = std::max(max_norm, std::abs(v - mean) / std::sqrt(var + p.epsilon));
    for (std::size_t i = 0; i < 9; ++i) {
      EXPECT_LE(std::abs(y.channel(c)[i]), 0.01 * max_norm + 1e-15);
      EXPECT_NEAR(y.channel(c)[i], 0.01 * (x.channel(c)[i] - mean) / std::sqrt(var + p.epsilon), 1e-12);
    }
  }
}

TEST(BatchNorm, ZeroGammaHasZeroInputGradient) {
  Rng rng(11);
  const FeatureMap x = oracle::random_map(2, 3, 3, rng);
  BatchNormParams p = BatchNormParams::init(2, 0.0);
  BatchNormCache cache;
  batchnorm2d(x, p, true, &cache);
  BatchNormGrads g{{0, 0}, {0, 0}};
  const FeatureMap dx = batchnorm2d_backward(p, cache, oracle::random_map(2, 3, 3, rng), &g);
  for (Real v : dx.data()) EXPECT_EQ(v, 0.0);
}

TEST(BatchNorm, GradientMatchesFiniteDifferences) {
  Rng rng(12);
  FeatureMap x = oracle::random_map(2, 3, 4, rng);
  const FeatureMap r = oracle::random_map(2, 3, 4, rng);
  BatchNormParams p = BatchNormParams::init(2, 0.7);
  p.beta = {0.1, -0.2};
  BatchNormCache cache;
  batchnorm2d(x, p, true, &cache);
  BatchNormGrads g{{0, 0}, {0, 0}};
  const FeatureMap dx = batchnorm2d_backward(p, cache, r, &g);
  const Real h = 1e-4;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Real v = x.data()[i];
    BatchNormParams q = p;
    x.data()[i] = v + h;
    const Real lp = dot(batchnorm2d(x, q, true), r);
    x.data()[i] = v - h;
    const Real lm = dot(batchnorm2d(x, q, true), r);
    x.data()[i] = v;
    EXPECT_NEAR(dx.data()[i], (lp - lm) / (2 * h), 1e-6);
  }
}

TEST(BatchNorm, EvalUsesRunningStatistics) {
  BatchNormParams p = BatchNormParams::init(1, 2.0);
  p.running_mean[0] = 1.0;
  p.running_var[0] = 4.0 - p.epsilon;
  FeatureMap x(1, 1, 2);
  x.at(0, 0, 0) = 3.0;
  x.at(0, 0, 1) = 1.0;
  const FeatureMap y = batchnorm2d(x, p, false);
  EXPECT_NEAR(y.at(0, 0, 0), 2.0, 1e-12);
  EXPECT_NEAR(y.at(0, 0, 1), 0.0, 1e-12);
}

TEST(GlobalAvgPool, Values) {
  FeatureMap x(2, 2, 2, 3.5);
  x.at(1, 0, 0) = 1;
  x.at(1, 0, 1) = 2;
  x.at(1, 1, 0) = 3;
  x.at(1, 1, 1) = 4;
  const auto v = global_avg_pool(x);
  EXPECT_EQ(v[0], 3.5);
  EXPECT_EQ(v[1], 2.5);
}

TEST(GlobalAvgPool, MatchesSummation) {
  Rng rng(13);
  const FeatureMap x = oracle::random_map(4, 7, 5, rng);
  const auto v = global_avg_pool(x);
  for (int c = 0; c < 4; ++c) {
    Real s = 0;
    for (int y = 0; y < 7; ++y)
      for (int xx = 0; xx < 5; ++xx) s += x.at(c, y, xx);
    EXPECT_NEAR(v[c], s / 35, 1e-6);
  }
}

TEST(Linear, InputGradientIsColumnSums) {
  Rng rng(14);
  DenseParams p = DenseParams::zeros(3, 4);
  for (Real& v : p.weight) v = rng.uniform(-1, 1);
  const std::vector<Real> x{0.3, -0.2, 0.9};
  const std::vector<Real> ones(4, 1.0);
  const auto dx = linear_backward(x, p, ones, nullptr);
  for (int i = 0; i < 3; ++i) {
    Real s = 0;
    for (int o = 0; o < 4; ++o) s += p.weight[o * 3 + i];
    EXPECT_NEAR(dx[i], s, 1e-15);
  }
}

TEST(Upsample, BackwardIsAdjoint) {
  Rng rng(15);
  const FeatureMap x = oracle::random_map(2, 3, 4, rng);
  const FeatureMap dy = oracle::random_map(2, 6, 8, rng);
  EXPECT_NEAR(dot(upsample_nearest2x(x), dy), dot(x, upsample_nearest2x_backward(dy, 3, 4)), 1e-12);
}

TEST(Concat, SplitInvertsConcat) {
  Rng rng(16);
  const FeatureMap a = oracle::random_map(2, 3, 3, rng);
  const FeatureMap b = oracle::random_map(3, 3, 3, rng);
  const auto [a2, b2] = split_channels(concat_channels(a, b), 2);
  EXPECT_EQ(a, a2);
  EXPECT_EQ(b, b2);
}
