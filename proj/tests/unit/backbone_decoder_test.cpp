#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "sparsefuse/backbone.hpp"
#include "sparsefuse/model.hpp"
#include "sparsefuse/scene.hpp"

using namespace sparsefuse;

namespace {

FeatureMap random_rgb(int h, int w, Rng& rng) { return oracle::random_map(3, h, w, rng, 0.0, 1.0); }

SparseDepth random_sparse(int h, int w, Real ratio, std::uint64_t seed) {
  Rng rng(seed);
  DepthMap gt(h, w);
  for (auto& v : gt.data()) v = rng.uniform(2, 140);
  return sparsify(gt, sample_mask(h, w, InjectionRatio(ratio), seed));
}

void zero_scale_head(ScaleHead& head) {
  for (Dense* d : {&head.fc1, &head.fc2}) {
    std::fill(d->params.weight.begin(), d->params.weight.end(), 0.0);
    std::fill(d->params.bias.begin(), d->params.bias.end(), 0.0);
  }
}

}  // namespace

TEST(VisualBackbone, LevelExtents) {
  Rng rng(1);
  VisualBackbone bb(BackboneConfig{}, rng);
  const auto [p, token] = bb.forward(random_rgb(112, 112, rng));
  const int expected[] = {112, 56, 28, 14, 7};
  for (int s = 0; s < kPyramidLevels; ++s) {
    EXPECT_EQ(p[s].height(), expected[s]);
    EXPECT_EQ(p[s].channels(), bb.channels()[s]);
  }
  EXPECT_EQ(token.size(), static_cast<std::size_t>(bb.channels()[4]));
}

TEST(VisualBackbone, ToyWidths) {
  EXPECT_EQ(BackboneConfig{}.channels(), (std::array<int, kPyramidLevels>{4, 8, 16, 32, 48}));
  EXPECT_EQ(BackboneConfig{1.0}.channels(), kFullVisualChannels);
}

TEST(VisualBackbone, DeterministicAndBiasDrivenOnZeroImage) {
  Rng r1(2), r2(2);
  VisualBackbone a(BackboneConfig{}, r1), b(BackboneConfig{}, r2);
  const FeatureMap zero(3, 32, 32);
  const auto pa = a.forward(zero).first;
  EXPECT_EQ(pa, b.forward(zero).first);
  // Zero biases and a zero image give an all-zero pyramid.
  for (const auto& lvl : pa)
    for (Real v : lvl.data()) EXPECT_EQ(v, 0.0);
}

TEST(VisualBackbone, RejectsIndivisibleExtent) {
  Rng rng(3);
  VisualBackbone bb(BackboneConfig{}, rng);
  EXPECT_THROW(bb.forward(FeatureMap(3, 30, 32)), ConfigError);
  EXPECT_THROW(bb.forward(FeatureMap(1, 32, 32)), ConfigError);
}

TEST(DepthDecoder, ZeroPyramidGivesExpBias) {
  Rng rng(4);
  const auto ch = BackboneConfig{}.channels();
  DepthDecoder dec(ch, 2.5, rng);
  Pyramid p;
  for (int s = 0; s < kPyramidLevels; ++s) p[s] = FeatureMap(ch[s], 32 >> s, 64 >> s);
  const DepthMap d = decode(p, dec);
  EXPECT_EQ(d.height(), 32);
  EXPECT_EQ(d.width(), 64);
  for (Real v : d.data()) EXPECT_DOUBLE_EQ(v, std::exp(2.5));
}

TEST(DepthDecoder, CoarsestLevelReachesOutput) {
  Rng rng(5);
  const auto ch = BackboneConfig{}.channels();
  DepthDecoder dec(ch, 3.0, rng);
  Pyramid p;
  for (int s = 0; s < kPyramidLevels; ++s) p[s] = oracle::random_map(ch[s], 32 >> s, 32 >> s, rng, 0, 1);
  const DepthMap before = decode(p, dec);
  for (Real& v : p[4].data()) v += 0.5;
  EXPECT_NE(decode(p, dec), before);
}

TEST(DepthDecoder, ChannelMismatchThrows) {
  Rng rng(6);
  const auto ch = BackboneConfig{}.channels();
  DepthDecoder dec(ch, 3.0, rng);
  Pyramid p;
  for (int s = 0; s < kPyramidLevels; ++s) p[s] = FeatureMap(ch[s] + 1, 32 >> s, 32 >> s);
  EXPECT_THROW(dec.forward(p), ConfigError);
}

TEST(ScaleHead, ZeroWeightsGiveUnitScale) {
  Rng rng(7);
  ScaleHead head(48, 64, 16, rng);
  zero_scale_head(head);
  std::vector<Real> token(48, 0.3), sparse(64, 1.2);
  EXPECT_EQ(predict_scale(token, sparse, head), 1.0);
}

TEST(ScaleHead, ScaleIsExpOfRaw) {
  Rng rng(8);
  ScaleHead head(4, 4, 8, rng);
  zero_scale_head(head);
  head.fc2.params.bias[0] = 0.7;
  const std::vector<Real> z(4, 0.0);
  EXPECT_DOUBLE_EQ(predict_scale(z, z, head), std::exp(0.7));
  head.fc2.params.bias[0] = 1.4;
  EXPECT_DOUBLE_EQ(predict_scale(z, z, head), std::exp(1.4));
}

TEST(ScaleHead, SparseGlobalGradientIsLiveForGenericWeights) {
  Rng rng(9);
  ScaleHead head(4, 4, 8, rng);
  for (Real& w : head.fc1.params.weight) w = rng.uniform(-1, 1);
  for (Real& b : head.fc1.params.bias) b = rng.uniform(0.1, 1);
  std::vector<Real> token{0.1, 0.2, 0.3, 0.4}, sparse{0.5, -0.2, 0.3, 0.9};
  head.forward(token, sparse);
  const auto [dt, ds] = head.backward(1.0);
  for (int i = 0; i < 4; ++i) {
    auto s = sparse;
    s[i] += 1e-6;
    const Real up = head.forward(token, s);
    s[i] -= 2e-6;
    const Real dn = head.forward(token, s);
    EXPECT_NEAR(ds[i], (up - dn) / 2e-6, 1e-6);
  }
  Real norm = 0;
  for (Real v : ds) norm += std::abs(v);
  EXPECT_GT(norm, 0.0);
}

TEST(ScaleHead, WidthMismatchThrows) {
  Rng rng(10);
  ScaleHead head(4, 4, 8, rng);
  const std::vector<Real> a(4), b(3);
  EXPECT_THROW(head.forward(a, b), ConfigError);
}

TEST(DepthModel, GammaZeroReducesToMonocularBitwise) {
  DepthModel fused(ModelConfig{}, 11), mono(ModelConfig{}, 11);
  fused.neck().set_gamma(0.0);
  mono.neck().set_gamma(0.0);
  mono.set_fusion_enabled(false);
  Rng rng(12);
  const FeatureMap rgb = random_rgb(32, 64, rng);
  const SparseDepth s = random_sparse(32, 64, 0.01, 13);
  for (bool training : {false, true}) {
    const auto a = fused.forward(rgb, &s, training);
    const auto b = mono.forward(rgb, nullptr, training);
    EXPECT_EQ(a.depth, b.depth);
    EXPECT_EQ(a.scale, b.scale);
  }
}

TEST(DepthModel, ZeroScaleHeadGivesRelativeDepth) {
  DepthModel m(ModelConfig{}, 14);
  m.neck().set_gamma(0.0);
  zero_scale_head(m.scale_head());
  Rng rng(15);
  const FeatureMap rgb = random_rgb(32, 64, rng);
  const SparseDepth s = random_sparse(32, 64, 0.02, 16);
  const auto pred = m.forward(rgb, &s, false);
  EXPECT_EQ(pred.scale, 1.0);
  auto [pyr, token] = m.backbone().forward(rgb);
  EXPECT_EQ(pred.depth, decode(pyr, m.decoder()));
}

TEST(DepthModel, PositiveFiniteAndLogConsistent) {
  DepthModel m(ModelConfig{}, 17);
  Rng rng(18);
  for (int t = 0; t < 3; ++t) {
    const SparseDepth s = random_sparse(32, 64, rng.uniform(0.005, 0.3), 19 + t);
    const auto p = full_forward(random_rgb(32, 64, rng), s, m);
    for (std::size_t i = 0; i < p.depth.size(); ++i) {
      EXPECT_TRUE(std::isfinite(p.depth[i]));
      EXPECT_GT(p.depth[i], 0.0);
      EXPECT_NEAR(std::log(p.depth[i]), p.log_depth[i], 1e-12);
    }
  }
}

TEST(DepthModel, InjectionIsLive) {
  ModelConfig cfg;
  cfg.bn_gamma_init = 0.5;
  DepthModel m(cfg, 20);
  Rng rng(21);
  const FeatureMap rgb = random_rgb(32, 64, rng);
  SparseDepth s = random_sparse(32, 64, 0.05, 22);
  const DepthMap before = full_forward(rgb, s, m).depth;
  for (std::size_t i = 0; i < s.depth.size(); ++i)
    if (s.mask[i]) s.depth[i] *= 1.5;
  EXPECT_NE(full_forward(rgb, s, m).depth, before);
}

TEST(DepthModel, FusionRequiresSparseInput) {
  DepthModel m(ModelConfig{}, 23);
  EXPECT_THROW(m.forward(FeatureMap(3, 32, 32), nullptr, false), ConfigError);
}

TEST(DepthModel, EncoderVariantsShareParameterLayout) {
  ModelConfig a, b;
  b.encoder = EncoderKind::interpolation;
  DepthModel ma(a, 1), mb(b, 1);
  const ParamSet pa = ma.parameters(), pb = mb.parameters();
  ASSERT_EQ(pa.params.size(), pb.params.size());
  for (std::size_t i = 0; i < pa.params.size(); ++i) {
    EXPECT_EQ(pa.params[i].name, pb.params[i].name);
    EXPECT_EQ(pa.params[i].value.size(), pb.params[i].value.size());
  }
}

TEST(DepthModel, EncoderKindNames) {
  EXPECT_EQ(to_string(EncoderKind::partial_conv), "partialconv");
  EXPECT_EQ(encoder_kind_from_string("interpolation"), EncoderKind::interpolation);
  EXPECT_THROW(encoder_kind_from_string("bilinear"), ConfigError);
}
