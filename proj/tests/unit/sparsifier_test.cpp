#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "sparsefuse/sparsifier.hpp"

using namespace sparsefuse;

TEST(SampleMask, ExactCounts) {
  EXPECT_EQ(valid_count(sample_mask(10, 10, InjectionRatio(0.10), 1)), 10u);
  EXPECT_EQ(valid_count(sample_mask(20, 20, InjectionRatio(0.005), 1)), 2u);
  Rng rng(2);
  for (int t = 0; t < 200; ++t) {
    const int h = 1 + static_cast<int>(rng.below(40)), w = 1 + static_cast<int>(rng.below(40));
    const Real r = rng.uniform(0.01, 1.0);
    const auto k = static_cast<std::size_t>(std::llround(r * h * w));
    if (k == 0) continue;
    EXPECT_EQ(valid_count(sample_mask(h, w, InjectionRatio(r), rng.next_u64())), k);
  }
}

TEST(SampleMask, SeedDeterminism) {
  const InjectionRatio r(0.05);
  EXPECT_EQ(sample_mask(32, 32, r, 9), sample_mask(32, 32, r, 9));
  EXPECT_NE(sample_mask(32, 32, r, 9), sample_mask(32, 32, r, 10));
}

TEST(SampleMask, ZeroSelectedPixelsRejected) {
  EXPECT_THROW(sample_mask(4, 4, InjectionRatio(0.01), 1), PreconditionError);
}

TEST(SampleMask, RatioOutOfRangeRejected) {
  EXPECT_THROW(InjectionRatio(0.0), PreconditionError);
  EXPECT_THROW(InjectionRatio(1.5), PreconditionError);
  EXPECT_THROW(InjectionRatio(std::nan("")), PreconditionError);
}

TEST(SampleMask, PositionsAreUniform) {
  // 4x4 image, 4 bits per draw: every pixel is hit with probability 1/4.
  std::vector<int> hits(16, 0);
  const int draws = 20000;
  for (int s = 0; s < draws; ++s) {
    const MaskMap m = sample_mask(4, 4, InjectionRatio(0.25), derive_seed(77, {std::uint64_t(s)}));
    for (int i = 0; i < 16; ++i) hits[i] += m[i];
  }
  // Binomial sd = sqrt(n p (1-p)) ~ 61; allow 5 sd.
  for (int h : hits) EXPECT_NEAR(h, draws / 4, 310);
}

TEST(SampleMask, AllowedRegionRespected) {
  MaskMap allowed(10, 10, 0);
  for (int x = 0; x < 10; ++x) allowed.at(3, x) = 1;
  const MaskMap m = sample_mask(10, 10, InjectionRatio(0.05), 3, allowed);
  EXPECT_EQ(valid_count(m), 5u);
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i]) EXPECT_EQ(allowed[i], 1);
  // Fewer allowed pixels than the target: all of them.
  MaskMap tiny(10, 10, 0);
  tiny.at(0, 0) = tiny.at(9, 9) = 1;
  EXPECT_EQ(valid_count(sample_mask(10, 10, InjectionRatio(0.05), 3, tiny)), 2u);
}

TEST(Sparsify, FullMaskIsIdentity) {
  Rng rng(4);
  DepthMap gt(6, 7);
  for (auto& v : gt.data()) v = rng.uniform(1, 100);
  const SparseDepth s = sparsify(gt, MaskMap(6, 7, 1));
  EXPECT_EQ(s.depth, gt);
  EXPECT_EQ(valid_count(s.mask), gt.size());
}

TEST(Sparsify, EmptyMaskIsDegenerate) {
  EXPECT_THROW(sparsify(DepthMap(4, 4, 5.0), MaskMap(4, 4, 0)), DegenerateInputError);
}

TEST(Sparsify, CarriesExactValues) {
  Rng rng(5);
  DepthMap gt(50, 40);
  for (auto& v : gt.data()) v = rng.uniform(1, 150);
  const MaskMap m = sample_mask(50, 40, InjectionRatio(0.01), 8);
  const SparseDepth s = sparsify(gt, m);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (m[i]) {
      EXPECT_EQ(s.depth[i], gt[i]);
      EXPECT_EQ(s.mask[i], 1);
    } else {
      EXPECT_EQ(s.depth[i], 0.0);
      EXPECT_EQ(s.mask[i], 0);
    }
  }
}

TEST(Sparsify, DropsNonPositiveDepth) {
  DepthMap gt(2, 2, 3.0);
  gt[1] = 0.0;
  gt[2] = std::nan("");
  const SparseDepth s = sparsify(gt, MaskMap(2, 2, 1));
  EXPECT_EQ(valid_count(s.mask), 2u);
  EXPECT_EQ(s.depth[1], 0.0);
  EXPECT_EQ(s.depth[2], 0.0);
}

namespace {

SparseDepth anchors(int h, int w, std::initializer_list<std::tuple<int, int, Real>> pts) {
  SparseDepth s{DepthMap(h, w, 0.0), MaskMap(h, w, 0)};
  for (auto [y, x, z] : pts) {
    s.depth.at(y, x) = z;
    s.mask.at(y, x) = 1;
  }
  return s;
}

}  // namespace

// Densification needs three non-collinear anchors, so the two-anchor cases
// carry a third anchor that cannot bias the probed value.
TEST(Densify, ConstantAnchorsGiveConstant) {
  const Real d = 42.5;
  const DepthMap out = bilinear_densify(anchors(9, 9, {{4, 1, d}, {4, 7, d}, {0, 4, d}}));
  EXPECT_NEAR(out.at(4, 4), d, 1e-12);
  for (Real v : out.data()) EXPECT_NEAR(v, d, 1e-12);
}

TEST(Densify, MidpointOfTwoAnchors) {
  // The third anchor holds the midpoint value, so it cannot pull the estimate.
  const DepthMap out = bilinear_densify(anchors(9, 9, {{4, 1, 10.0}, {4, 7, 20.0}, {0, 0, 15.0}}));
  EXPECT_NEAR(out.at(4, 4), 15.0, 1e-6);
}

TEST(Densify, PassThroughAtValidPixels) {
  Rng rng(6);
  DepthMap gt(24, 32);
  for (auto& v : gt.data()) v = rng.uniform(1, 150);
  const SparseDepth s = sparsify(gt, sample_mask(24, 32, InjectionRatio(0.03), 2));
  const DepthMap out = bilinear_densify(s);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (s.mask[i]) EXPECT_EQ(out[i], gt[i]);
    EXPECT_TRUE(std::isfinite(out[i]));
    EXPECT_GT(out[i], 0.0);
  }
}

TEST(Densify, DegenerateAnchorSets) {
  EXPECT_THROW(bilinear_densify(anchors(5, 5, {{1, 1, 3.0}, {3, 3, 4.0}})), DegenerateInputError);
  EXPECT_THROW(bilinear_densify(anchors(5, 5, {{0, 0, 3.0}, {1, 1, 4.0}, {2, 2, 5.0}})),
               DegenerateInputError);
}

TEST(RatioSampler, MeanAndRange) {
  UniformRatioSampler s(123);
  Real sum = 0;
  for (int i = 0; i < 10000; ++i) {
    const Real r = s.next().value();
    EXPECT_GE(r, kTrainRatioMin);
    EXPECT_LE(r, kTrainRatioMax);
    sum += r;
  }
  EXPECT_NEAR(sum / 10000, 0.1525, 0.005);
}

TEST(RatioSampler, SeedsReproduceStreams) {
  UniformRatioSampler a(5), b(5), c(6);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const Real va = a.next().value();
    EXPECT_EQ(va, b.next().value());
    differs |= va != c.next().value();
  }
  EXPECT_TRUE(differs);
}

TEST(RatioSampler, InvalidRangeRejected) {
  EXPECT_THROW(UniformRatioSampler(1, 0.3, 0.1), ConfigError);
  EXPECT_THROW(UniformRatioSampler(1, 0.0, 0.1), ConfigError);
}
