#include "sparsefuse/fusion_neck.hpp"

#include <algorithm>
#include <string>

namespace sparsefuse {

SEBlock::SEBlock(int channels, int reduction, Rng& rng)
    : channels_(channels), hidden_(std::max(1, channels / reduction)) {
  if (channels <= 0 || reduction <= 0) throw ConfigError("SEBlock: invalid channels/reduction");
  fc1 = Dense(channels_, hidden_, rng);
  fc2 = Dense(hidden_, channels_, rng);
}

FeatureMap SEBlock::forward(const FeatureMap& x) {
  if (x.channels() != channels_) throw ConfigError("SEBlock: channel mismatch");
  input_ = x;
  const std::vector<Real> squeezed = global_avg_pool(x);
  hidden_act_ = relu(fc1.forward(squeezed));
  const std::vector<Real> logits = fc2.forward(hidden_act_);
  gate_.resize(channels_);
  for (int c = 0; c < channels_; ++c) gate_[c] = sigmoid(logits[c]);
  FeatureMap y = x;
  for (int c = 0; c < channels_; ++c)
    for (Real& v : y.channel(c)) v *= gate_[c];
  return y;
}

FeatureMap SEBlock::backward(const FeatureMap& dy) {
  FeatureMap dx(dy.channels(), dy.height(), dy.width());
  std::vector<Real> dlogit(channels_);
  for (int c = 0; c < channels_; ++c) {
    const auto g = dy.channel(c);
    const auto in = input_.channel(c);
    auto out = dx.channel(c);
    Real dgate = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      dgate += g[i] * in[i];
      out[i] = g[i] * gate_[c];
    }
    dlogit[c] = dgate * gate_[c] * (1.0 - gate_[c]);
  }
  const std::vector<Real> dhidden = relu_backward(hidden_act_, fc2.backward(dlogit));
  const std::vector<Real> dsqueezed = fc1.backward(dhidden);
  add_inplace(dx, global_avg_pool_backward(dsqueezed, dy.height(), dy.width()));
  return dx;
}

void SEBlock::collect(const std::string& prefix, ParamSet& set) {
  fc1.collect(prefix + ".fc1", set);
  fc2.collect(prefix + ".fc2", set);
}

FeatureMap se_forward(const FeatureMap& x, const SEBlock& se) {
  if (x.channels() != se.channels()) throw ConfigError("se_forward: channel mismatch");
  const std::vector<Real> hidden = relu(linear(global_avg_pool(x), se.fc1.params));
  const std::vector<Real> logits = linear(hidden, se.fc2.params);
  FeatureMap y = x;
  for (int c = 0; c < x.channels(); ++c) {
    const Real gate = sigmoid(logits[c]);
    for (Real& v : y.channel(c)) v *= gate;
  }
  return y;
}

FusionBlock::FusionBlock(int rgb_channels, int depth_channels, int se_reduction, Real gamma0,
                         Real momentum, Real epsilon, bool frozen_bn, Rng& rng)
    : concat_conv(rgb_channels + depth_channels, rgb_channels, 1, 1, rng),
      bn(rgb_channels, gamma0, momentum, epsilon),
      dw(rgb_channels, 3, rng),
      se(rgb_channels, se_reduction, rng),
      rgb_channels_(rgb_channels),
      frozen_bn_(frozen_bn) {}

FeatureMap FusionBlock::forward(const FeatureMap& rgb, const FeatureMap& depth, bool training) {
  if (!rgb.same_extent(depth)) throw ConfigError("fuse: rgb and depth extents differ");
  if (rgb.channels() != rgb_channels_) throw ConfigError("fuse: rgb channel mismatch");
  FeatureMap branch = concat_conv.forward(concat_channels(rgb, depth));
  branch = bn.forward(branch, training && !frozen_bn_);
  branch = dw.forward(branch);
  branch = se.forward(branch);
  FeatureMap out = rgb;
  add_inplace(out, branch);
  return out;
}

std::pair<FeatureMap, FeatureMap> FusionBlock::backward(const FeatureMap& dy) {
  FeatureMap d = se.backward(dy);
  d = dw.backward(d);
  d = bn.backward(d);
  d = concat_conv.backward(d);
  auto [d_rgb, d_depth] = split_channels(d, rgb_channels_);
  add_inplace(d_rgb, dy);
  return {std::move(d_rgb), std::move(d_depth)};
}

void FusionBlock::collect(const std::string& prefix, ParamSet& set) {
  concat_conv.collect(prefix + ".conv", set);
  bn.collect(prefix + ".bn", set);
  dw.collect(prefix + ".dw", set);
  se.collect(prefix + ".se", set);
}

FeatureMap fuse(const FeatureMap& rgb, const MaskedFeature& depth, FusionBlock& block,
                bool training) {
  return block.forward(rgb, depth.features, training);
}

std::array<int, kPyramidLevels> NeckConfig::level_widths() const {
  std::array<int, kPyramidLevels> w{};
  for (int i = 0; i < kPyramidLevels; ++i) w[i] = visual_channels[kPyramidLevels - 1 - i];
  return w;
}

void NeckConfig::validate() const {
  for (int i = 0; i < kPyramidLevels; ++i)
    if (visual_channels[i] <= 0 || sparse_channels[i] <= 0)
      throw ConfigError("neck channel widths must be positive");
  if (se_reduction <= 0) throw ConfigError("SE reduction must be positive");
}

FusionNeck::FusionNeck(const NeckConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  for (int s = 0; s < kPyramidLevels; ++s) {
    adapters_[s] = Conv2d(cfg_.sparse_channels[s], cfg_.visual_channels[s], 1, 1, rng);
    blocks_[s] = FusionBlock(cfg_.visual_channels[s], cfg_.visual_channels[s], cfg_.se_reduction,
                             cfg_.bn_gamma_init, cfg_.bn_momentum, cfg_.bn_epsilon, cfg_.bn_frozen, rng);
  }
}

Pyramid FusionNeck::forward(const Pyramid& visual,
                            const std::array<MaskedFeature, kPyramidLevels>& sparse,
                            bool training) {
  Pyramid out;
  for (int s = 0; s < kPyramidLevels; ++s) {
    if (!visual[s].same_extent(sparse[s].features))
      throw ConfigError("neck level " + std::to_string(s) +
                        ": visual and sparse extents differ");
    const FeatureMap adapted = adapters_[s].forward(sparse[s].features);
    out[s] = blocks_[s].forward(visual[s], adapted, training);
  }
  return out;
}

std::pair<Pyramid, std::array<FeatureMap, kPyramidLevels>> FusionNeck::backward(
    const Pyramid& dy) {
  Pyramid d_visual;
  std::array<FeatureMap, kPyramidLevels> d_sparse;
  for (int s = 0; s < kPyramidLevels; ++s) {
    auto [d_rgb, d_depth] = blocks_[s].backward(dy[s]);
    d_visual[s] = std::move(d_rgb);
    d_sparse[s] = adapters_[s].backward(d_depth);
  }
  return {std::move(d_visual), std::move(d_sparse)};
}

void FusionNeck::collect(const std::string& prefix, ParamSet& set) {
  for (int s = 0; s < kPyramidLevels; ++s) {
    adapters_[s].collect(prefix + ".adapter" + std::to_string(s), set);
    blocks_[s].collect(prefix + ".block" + std::to_string(s), set);
  }
}

void FusionNeck::set_gamma(Real gamma) {
  for (auto& b : blocks_) std::fill(b.bn.params.gamma.begin(), b.bn.params.gamma.end(), gamma);
}

}  // namespace sparsefuse
