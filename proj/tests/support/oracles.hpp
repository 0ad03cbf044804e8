#pragma once

// Reference implementations written directly from the definitions, sharing
// no code with the library kernels they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "sparsefuse/ops.hpp"
#include "sparsefuse/partial_encoder.hpp"
#include "sparsefuse/rng.hpp"

namespace oracle {

using sparsefuse::ConvParams;
using sparsefuse::FeatureMap;
using sparsefuse::MaskedFeature;
using sparsefuse::MaskMap;
using sparsefuse::Real;
using sparsefuse::Rng;

inline FeatureMap random_map(int c, int h, int w, Rng& rng, Real lo = -1.0, Real hi = 1.0) {
  FeatureMap m(c, h, w);
  for (Real& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

inline ConvParams random_conv(int in, int out, int k, int stride, Rng& rng) {
  ConvParams p = ConvParams::zeros(in, out, k, stride);
  for (Real& v : p.weight) v = rng.uniform(-1.0, 1.0);
  for (Real& v : p.bias) v = rng.uniform(-1.0, 1.0);
  return p;
}

inline MaskMap random_mask(int h, int w, Real density, Rng& rng) {
  MaskMap m(h, w, 0);
  for (auto& b : m.data()) b = rng.uniform() < density ? 1 : 0;
  return m;
}

/// Nested-loop convolution, zero padding (k-1)/2.
inline FeatureMap conv(const FeatureMap& x, const ConvParams& p) {
  const int k = p.kernel_size, pad = (k - 1) / 2, s = p.stride;
  const int oh = (x.height() + s - 1) / s, ow = (x.width() + s - 1) / s;
  FeatureMap y(p.out_channels, oh, ow);
  for (int o = 0; o < p.out_channels; ++o)
    for (int yy = 0; yy < oh; ++yy)
      for (int xx = 0; xx < ow; ++xx) {
        Real acc = p.bias[o];
        for (int i = 0; i < p.in_channels; ++i)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int iy = yy * s + ky - pad, ix = xx * s + kx - pad;
              if (iy < 0 || ix < 0 || iy >= x.height() || ix >= x.width()) continue;
              acc += p.weight[((o * p.in_channels + i) * k + ky) * k + kx] * x.at(i, iy, ix);
            }
        y.at(o, yy, xx) = acc;
      }
  return y;
}

/// Per-site partial convolution: S valid taps of K in-image taps; S = 0 gives
/// (0, invalid), otherwise (masked sum * K / S + bias, valid).
inline MaskedFeature masked_window(const MaskedFeature& in, const ConvParams& p) {
  const FeatureMap& x = in.features;
  const int k = p.kernel_size, pad = (k - 1) / 2, s = p.stride;
  const int oh = (x.height() + s - 1) / s, ow = (x.width() + s - 1) / s;
  MaskedFeature out{FeatureMap(p.out_channels, oh, ow), MaskMap(oh, ow, 0)};
  for (int yy = 0; yy < oh; ++yy)
    for (int xx = 0; xx < ow; ++xx) {
      int taps = 0, valid = 0;
      for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx) {
          const int iy = yy * s + ky - pad, ix = xx * s + kx - pad;
          if (iy < 0 || ix < 0 || iy >= x.height() || ix >= x.width()) continue;
          ++taps;
          valid += in.mask.at(iy, ix) ? 1 : 0;
        }
      if (valid == 0) continue;
      out.mask.at(yy, xx) = 1;
      for (int o = 0; o < p.out_channels; ++o) {
        Real acc = 0;
        for (int i = 0; i < p.in_channels; ++i)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int iy = yy * s + ky - pad, ix = xx * s + kx - pad;
              if (iy < 0 || ix < 0 || iy >= x.height() || ix >= x.width()) continue;
              if (!in.mask.at(iy, ix)) continue;
              acc += p.weight[((o * p.in_channels + i) * k + ky) * k + kx] * x.at(i, iy, ix);
            }
        out.features.at(o, yy, xx) = acc * static_cast<Real>(taps) / valid + p.bias[o];
      }
    }
  return out;
}

inline Real max_abs_diff(const FeatureMap& a, const FeatureMap& b) {
  Real m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

// Metric loops over parallel pred/gt vectors.
inline Real absrel(const std::vector<Real>& p, const std::vector<Real>& g) {
  Real s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - g[i]) / g[i];
  return s / p.size();
}

/// Two-pass: errors first, then the mean of their squares.
inline Real rmse(const std::vector<Real>& p, const std::vector<Real>& g) {
  std::vector<Real> e(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) e[i] = p[i] - g[i];
  Real s = 0;
  for (Real v : e) s += v * v;
  return std::sqrt(s / e.size());
}

inline Real delta1(const std::vector<Real>& p, const std::vector<Real>& g) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Real r = p[i] > g[i] ? p[i] / g[i] : g[i] / p[i];
    if (r < 1.25) ++hit;
  }
  return static_cast<Real>(hit) / p.size();
}

}  // namespace oracle
