#include "sparsefuse/partial_encoder.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace sparsefuse {

SparseDepth nn_fill(const SparseDepth& s, int radius) {
  if (!s.depth.same_extent(s.mask)) throw ConfigError("nn_fill: extent mismatch");
  if (radius < 0) throw ConfigError("nn_fill: radius must be nonnegative");
  if (valid_count(s.mask) == 0) throw DegenerateInputError("nn_fill: empty mask");
  const int h = s.depth.height();
  const int w = s.depth.width();
  SparseDepth out = s;
  if (radius == 0) return out;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (s.mask.at(y, x)) continue;
      int best = std::numeric_limits<int>::max();
      Real z = 0.0;
      const int y0 = std::max(0, y - radius), y1 = std::min(h - 1, y + radius);
      const int x0 = std::max(0, x - radius), x1 = std::min(w - 1, x + radius);
      // Row-major scan with a strict comparison keeps the smaller row, then
      // the smaller column, on ties.
      for (int yy = y0; yy <= y1; ++yy)
        for (int xx = x0; xx <= x1; ++xx) {
          if (!s.mask.at(yy, xx)) continue;
          const int d = (yy - y) * (yy - y) + (xx - x) * (xx - x);
          if (d < best) {
            best = d;
            z = s.depth.at(yy, xx);
          }
        }
      if (best != std::numeric_limits<int>::max()) {
        out.depth.at(y, x) = z;
        out.mask.at(y, x) = 1;
      }
    }
  }
  return out;
}

namespace {

// Inclusive prefix sums of a binary raster, (h+1) x (w+1).
std::vector<int> integral(const MaskMap& m) {
  const int h = m.height();
  const int w = m.width();
  std::vector<int> s(static_cast<std::size_t>(h + 1) * (w + 1), 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      s[(y + 1) * (w + 1) + x + 1] =
          m.at(y, x) + s[y * (w + 1) + x + 1] + s[(y + 1) * (w + 1) + x] - s[y * (w + 1) + x];
  return s;
}

FeatureMap masked_copy(const MaskedFeature& x) {
  FeatureMap f = x.features;
  const std::size_t plane = f.plane();
  for (int c = 0; c < f.channels(); ++c) {
    auto ch = f.channel(c);
    for (std::size_t i = 0; i < plane; ++i)
      if (!x.mask[i]) ch[i] = 0.0;
  }
  return f;
}

void check_masked(const MaskedFeature& x) {
  if (x.features.height() != x.mask.height() || x.features.width() != x.mask.width())
    throw ConfigError("masked feature: mask extent differs from feature extent");
}

}  // namespace

MaskedFeature partial_conv2d(const MaskedFeature& x, const ConvParams& p,
                             std::vector<Real>* scale_out) {
  check_masked(x);
  const FeatureMap xm = masked_copy(x);
  FeatureMap raw = conv2d_no_bias(xm, p);
  const int h = x.mask.height();
  const int w = x.mask.width();
  const int oh = raw.height();
  const int ow = raw.width();
  const int pad = (p.kernel_size - 1) / 2;
  const std::vector<int> sums = integral(x.mask);
  MaskMap out_mask(oh, ow, 0);
  std::vector<Real> scale(static_cast<std::size_t>(oh) * ow, 0.0);
  for (int oy = 0; oy < oh; ++oy) {
    const int ya = std::max(0, oy * p.stride - pad);
    const int yb = std::min(h - 1, oy * p.stride + pad);
    for (int ox = 0; ox < ow; ++ox) {
      const int xa = std::max(0, ox * p.stride - pad);
      const int xb = std::min(w - 1, ox * p.stride + pad);
      const int valid = sums[(yb + 1) * (w + 1) + xb + 1] - sums[ya * (w + 1) + xb + 1] -
                        sums[(yb + 1) * (w + 1) + xa] + sums[ya * (w + 1) + xa];
      if (valid == 0) continue;
      const int taps = (yb - ya + 1) * (xb - xa + 1);
      out_mask.at(oy, ox) = 1;
      scale[static_cast<std::size_t>(oy) * ow + ox] =
          static_cast<Real>(taps) / static_cast<Real>(valid);
    }
  }
  const std::size_t plane = raw.plane();
  for (int o = 0; o < raw.channels(); ++o) {
    auto ch = raw.channel(o);
    for (std::size_t i = 0; i < plane; ++i)
      ch[i] = out_mask[i] ? ch[i] * scale[i] + p.bias[o] : 0.0;
  }
  if (scale_out) *scale_out = std::move(scale);
  return {std::move(raw), std::move(out_mask)};
}

PartialConvLayer::PartialConvLayer(int in_channels, int out_channels, int kernel_size, int stride,
                                   Rng& rng)
    : conv_(in_channels, out_channels, kernel_size, stride, rng) {
  if (stride != 1 && stride != 2) throw ConfigError("partial conv stride must be 1 or 2");
}

MaskedFeature PartialConvLayer::forward(const MaskedFeature& x) {
  check_masked(x);
  input_.features = masked_copy(x);
  input_.mask = x.mask;
  MaskedFeature y = partial_conv2d(input_, conv_.params, &scale_);
  out_mask_ = y.mask;
  return y;
}

FeatureMap PartialConvLayer::backward(const FeatureMap& dy) {
  const ConvParams& p = conv_.params;
  if (dy.channels() != p.out_channels || dy.height() != out_mask_.height() ||
      dy.width() != out_mask_.width())
    throw InternalError("PartialConvLayer::backward: shape mismatch");
  FeatureMap scaled(dy.channels(), dy.height(), dy.width());
  const std::size_t plane = dy.plane();
  for (int o = 0; o < dy.channels(); ++o) {
    const auto g = dy.channel(o);
    auto sg = scaled.channel(o);
    Real db = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      if (!out_mask_[i]) continue;
      db += g[i];
      sg[i] = g[i] * scale_[i];
    }
    conv_.grads.bias[o] += db;
  }
  FeatureMap dx = conv2d_no_bias_backward(input_.features, p, scaled, &conv_.grads.weight);
  const std::size_t in_plane = dx.plane();
  for (int c = 0; c < dx.channels(); ++c) {
    auto ch = dx.channel(c);
    for (std::size_t i = 0; i < in_plane; ++i)
      if (!input_.mask[i]) ch[i] = 0.0;
  }
  return dx;
}

SparseEncoderConfig SparseEncoderConfig::scaled(Real multiplier) {
  SparseEncoderConfig cfg;
  for (auto& c : cfg.stage_channels)
    c = std::max(1, static_cast<int>(std::lround(multiplier * c)));
  return cfg;
}

void SparseEncoderConfig::validate() const {
  for (int i = 0; i < kPyramidLevels; ++i) {
    if (stage_channels[i] <= 0) throw ConfigError("encoder stage channels must be positive");
    if (i > 0 && stage_channels[i] <= stage_channels[i - 1])
      throw ConfigError("encoder stage channels must be strictly increasing");
    if (stage_strides[i] != 1 && stage_strides[i] != 2)
      throw ConfigError("encoder stage strides must be 1 or 2");
  }
  if (kernel_size <= 0 || kernel_size % 2 == 0) throw ConfigError("encoder kernel must be odd");
  if (fill_radius < 0) throw ConfigError("fill radius must be nonnegative");
}

MaskedFeature sparse_input(const SparseDepth& s) {
  if (!s.depth.same_extent(s.mask)) throw ConfigError("sparse_input: extent mismatch");
  MaskedFeature in{FeatureMap(1, s.depth.height(), s.depth.width()), s.mask};
  auto ch = in.features.channel(0);
  for (std::size_t i = 0; i < s.depth.size(); ++i)
    if (s.mask[i]) ch[i] = std::log(s.depth[i]);
  return in;
}

SparseEncoder::SparseEncoder(const SparseEncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  int in = 1;
  for (int i = 0; i < kPyramidLevels; ++i) {
    stages_[i] = PartialConvLayer(in, cfg_.stage_channels[i], cfg_.kernel_size,
                                  cfg_.stage_strides[i], rng);
    in = cfg_.stage_channels[i];
  }
}

SparseEncoder::Output SparseEncoder::forward(const SparseDepth& s) {
  return encode(sparse_input(nn_fill(s, cfg_.fill_radius)));
}

SparseEncoder::Output SparseEncoder::encode(const MaskedFeature& input) {
  MaskedFeature cur = input;
  for (int i = 0; i < kPyramidLevels; ++i) {
    MaskedFeature y = stages_[i].forward(cur);
    if (i == 0 && valid_count(y.mask) == 0)
      throw DegenerateInputError("sparse encoder: stage-1 mask is empty");
    y.features = relu(y.features);
    outputs_[i] = y;
    cur = std::move(y);
  }
  Output out;
  out.stages = outputs_;
  const MaskedFeature& deepest = outputs_[kPyramidLevels - 1];
  deepest_valid_ = valid_count(deepest.mask);
  out.global.assign(deepest.features.channels(), 0.0);
  for (int c = 0; c < deepest.features.channels(); ++c) {
    Real sum = 0.0;
    const auto ch = deepest.features.channel(c);
    for (std::size_t i = 0; i < ch.size(); ++i)
      if (deepest.mask[i]) sum += ch[i];
    out.global[c] = sum / static_cast<Real>(deepest_valid_);
  }
  return out;
}

void SparseEncoder::backward(const std::array<FeatureMap, kPyramidLevels>& d_stages,
                             std::span<const Real> d_global) {
  FeatureMap carry;
  for (int i = kPyramidLevels - 1; i >= 0; --i) {
    const MaskedFeature& out = outputs_[i];
    FeatureMap d(out.features.channels(), out.features.height(), out.features.width());
    if (!d_stages[i].empty()) add_inplace(d, d_stages[i]);
    if (!carry.empty()) add_inplace(d, carry);
    if (i == kPyramidLevels - 1 && !d_global.empty()) {
      const Real inv = 1.0 / static_cast<Real>(deepest_valid_);
      for (int c = 0; c < d.channels(); ++c) {
        auto ch = d.channel(c);
        for (std::size_t j = 0; j < ch.size(); ++j)
          if (out.mask[j]) ch[j] += d_global[c] * inv;
      }
    }
    carry = stages_[i].backward(relu_backward(out.features, d));
  }
}

void SparseEncoder::collect(const std::string& prefix, ParamSet& set) {
  for (int i = 0; i < kPyramidLevels; ++i)
    stages_[i].collect(prefix + ".stage" + std::to_string(i), set);
}

SparseEncoder::Output encode(const SparseDepth& s, SparseEncoder& encoder) {
  return encoder.forward(s);
}

}  // namespace sparsefuse
