#include "sparsefuse/backbone.hpp"

#include <cmath>
#include <string>

namespace sparsefuse {

std::array<int, kPyramidLevels> BackboneConfig::channels() const {
  if (!(width_multiplier > 0.0)) throw ConfigError("width multiplier must be positive");
  std::array<int, kPyramidLevels> c{};
  for (int s = 0; s < kPyramidLevels; ++s)
    c[s] = std::max(1, static_cast<int>(std::lround(width_multiplier * kFullVisualChannels[s])));
  return c;
}

VisualBackbone::VisualBackbone(const BackboneConfig& cfg, Rng& rng) : channels_(cfg.channels()) {
  int in = 3;
  for (int s = 0; s < kPyramidLevels; ++s) {
    down_[s] = ConvRelu(in, channels_[s], 3, s == 0 ? 1 : 2, rng);
    refine_[s] = ConvRelu(channels_[s], channels_[s], 3, 1, rng);
    in = channels_[s];
  }
}

std::pair<Pyramid, std::vector<Real>> VisualBackbone::forward(const FeatureMap& rgb) {
  if (rgb.channels() != 3) throw ConfigError("visual backbone expects a 3-channel image");
  if (rgb.height() % 16 != 0 || rgb.width() % 16 != 0)
    throw ConfigError("image extent " + std::to_string(rgb.height()) + "x" +
                      std::to_string(rgb.width()) + " is not divisible by 16");
  Pyramid p;
  const FeatureMap* cur = &rgb;
  for (int s = 0; s < kPyramidLevels; ++s) {
    p[s] = refine_[s].forward(down_[s].forward(*cur));
    cur = &p[s];
  }
  deepest_extent_ = {p.back().height(), p.back().width()};
  std::vector<Real> token = global_avg_pool(p.back());
  return {std::move(p), std::move(token)};
}

void VisualBackbone::backward(const Pyramid& d_pyramid, std::span<const Real> d_token) {
  FeatureMap carry;
  for (int s = kPyramidLevels - 1; s >= 0; --s) {
    FeatureMap d = d_pyramid[s];
    if (!carry.empty()) add_inplace(d, carry);
    if (s == kPyramidLevels - 1 && !d_token.empty())
      add_inplace(d, global_avg_pool_backward(d_token, deepest_extent_[0], deepest_extent_[1]));
    carry = down_[s].backward(refine_[s].backward(d));
  }
}

void VisualBackbone::collect(const std::string& prefix, ParamSet& set) {
  for (int s = 0; s < kPyramidLevels; ++s) {
    down_[s].collect(prefix + ".down" + std::to_string(s), set);
    refine_[s].collect(prefix + ".refine" + std::to_string(s), set);
  }
}

DepthDecoder::DepthDecoder(const std::array<int, kPyramidLevels>& channels, Real raw_bias,
                           Rng& rng)
    : channels_(channels) {
  for (int s = 0; s < kPyramidLevels - 1; ++s) {
    project_[s] = Conv2d(channels_[s + 1], channels_[s], 1, 1, rng);
    refine_[s] = ConvRelu(channels_[s], channels_[s], 3, 1, rng);
  }
  head_ = Conv2d(channels_[0], 1, 3, 1, rng);
  // Small head weights keep the initial prediction near exp(raw_bias).
  for (Real& w : head_.params.weight) w *= 0.1;
  head_.params.bias[0] = raw_bias;
}

FeatureMap DepthDecoder::forward(const Pyramid& pyramid) {
  for (int s = 0; s < kPyramidLevels; ++s) {
    if (pyramid[s].channels() != channels_[s])
      throw ConfigError("decoder: level " + std::to_string(s) + " has " +
                        std::to_string(pyramid[s].channels()) + " channels, expected " +
                        std::to_string(channels_[s]));
    extents_[s] = {pyramid[s].height(), pyramid[s].width()};
  }
  FeatureMap cur = pyramid[kPyramidLevels - 1];
  for (int s = kPyramidLevels - 2; s >= 0; --s) {
    FeatureMap up = project_[s].forward(upsample_nearest2x(cur));
    if (!up.same_extent(pyramid[s])) throw ConfigError("decoder: pyramid extents are not 2x apart");
    add_inplace(up, pyramid[s]);
    cur = refine_[s].forward(up);
  }
  return head_.forward(cur);
}

Pyramid DepthDecoder::backward(const FeatureMap& d_raw) {
  Pyramid d;
  FeatureMap g = head_.backward(d_raw);
  for (int s = 0; s < kPyramidLevels - 1; ++s) {
    g = refine_[s].backward(g);
    d[s] = g;  // skip connection
    g = upsample_nearest2x_backward(project_[s].backward(g), extents_[s + 1][0],
                                    extents_[s + 1][1]);
  }
  d[kPyramidLevels - 1] = std::move(g);
  return d;
}

void DepthDecoder::collect(const std::string& prefix, ParamSet& set) {
  for (int s = kPyramidLevels - 2; s >= 0; --s) {
    project_[s].collect(prefix + ".project" + std::to_string(s), set);
    refine_[s].collect(prefix + ".refine" + std::to_string(s), set);
  }
  head_.collect(prefix + ".head", set);
}

DepthMap decode(const Pyramid& pyramid, DepthDecoder& decoder) {
  const FeatureMap raw = decoder.forward(pyramid);
  DepthMap out(raw.height(), raw.width());
  const auto r = raw.channel(0);
  for (std::size_t i = 0; i < r.size(); ++i) out[i] = std::exp(r[i]);
  return out;
}

ScaleHead::ScaleHead(int token_width, int sparse_width, int hidden, Rng& rng)
    : fc1(token_width + sparse_width, hidden, rng),
      fc2(hidden, 1, rng),
      token_width_(token_width),
      sparse_width_(sparse_width) {
  for (Real& w : fc2.params.weight) w *= 0.1;
  // Sparse inputs start disconnected so switching fusion on leaves the
  // predicted scale unchanged.
  const int in = token_width + sparse_width;
  for (int o = 0; o < hidden; ++o)
    for (int i = token_width; i < in; ++i) fc1.params.weight[static_cast<std::size_t>(o) * in + i] = 0.0;
}

Real ScaleHead::forward(std::span<const Real> token, std::span<const Real> sparse_global) {
  if (static_cast<int>(token.size()) != token_width_ ||
      static_cast<int>(sparse_global.size()) != sparse_width_)
    throw ConfigError("scale head: input widths " + std::to_string(token.size()) + "+" +
                      std::to_string(sparse_global.size()) + " do not match " +
                      std::to_string(token_width_) + "+" + std::to_string(sparse_width_));
  std::vector<Real> in(token.begin(), token.end());
  in.insert(in.end(), sparse_global.begin(), sparse_global.end());
  hidden_ = relu(fc1.forward(in));
  return fc2.forward(hidden_)[0];
}

std::pair<std::vector<Real>, std::vector<Real>> ScaleHead::backward(Real d_raw) {
  const Real d[1] = {d_raw};
  const std::vector<Real> dh = relu_backward(hidden_, fc2.backward(d));
  const std::vector<Real> din = fc1.backward(dh);
  return {std::vector<Real>(din.begin(), din.begin() + token_width_),
          std::vector<Real>(din.begin() + token_width_, din.end())};
}

void ScaleHead::collect(const std::string& prefix, ParamSet& set) {
  fc1.collect(prefix + ".fc1", set);
  fc2.collect(prefix + ".fc2", set);
}

Real predict_scale(std::span<const Real> token, std::span<const Real> sparse_global,
                   ScaleHead& head) {
  return std::exp(head.forward(token, sparse_global));
}

}  // namespace sparsefuse
