#include "sparsefuse/sparsifier.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace sparsefuse {

InjectionRatio::InjectionRatio(Real value) : value_(value) {
  if (!(value > 0.0 && value <= 1.0))
    throw PreconditionError("injection ratio must lie in (0, 1], got " + std::to_string(value));
}

std::size_t injection_count(int height, int width, InjectionRatio ratio) {
  return static_cast<std::size_t>(
      std::llround(ratio.value() * static_cast<Real>(height) * static_cast<Real>(width)));
}

namespace {

MaskMap draw_mask(int height, int width, InjectionRatio ratio, std::uint64_t seed,
                  const MaskMap* allowed) {
  const std::size_t k = injection_count(height, width, ratio);
  if (k == 0)
    throw PreconditionError("injection ratio " + std::to_string(ratio.value()) +
                            " selects zero pixels on a " + std::to_string(height) + "x" +
                            std::to_string(width) + " image");
  const std::size_t n = static_cast<std::size_t>(height) * width;
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  Rng rng(seed);
  MaskMap mask(height, width, 0);
  std::size_t taken = 0;
  // Incremental Fisher-Yates: position i of the permutation is fixed once drawn.
  for (std::size_t i = 0; i < n && taken < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(order[i], order[j]);
    const std::uint32_t px = order[i];
    if (allowed && (*allowed)[px] == 0) continue;
    mask[px] = 1;
    ++taken;
  }
  return mask;
}

}  // namespace

MaskMap sample_mask(int height, int width, InjectionRatio ratio, std::uint64_t seed) {
  return draw_mask(height, width, ratio, seed, nullptr);
}

MaskMap sample_mask(int height, int width, InjectionRatio ratio, std::uint64_t seed,
                    const MaskMap& allowed) {
  if (allowed.height() != height || allowed.width() != width)
    throw ConfigError("sample_mask: allowed-region extent mismatch");
  return draw_mask(height, width, ratio, seed, &allowed);
}

SparseDepth sparsify(const DepthMap& gt, const MaskMap& mask) {
  if (!gt.same_extent(mask)) throw ConfigError("sparsify: depth and mask extents differ");
  SparseDepth out{DepthMap(gt.height(), gt.width(), 0.0), MaskMap(gt.height(), gt.width(), 0)};
  std::size_t kept = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!mask[i]) continue;
    const Real z = gt[i];
    if (!(std::isfinite(z) && z > 0.0)) continue;
    out.depth[i] = z;
    out.mask[i] = 1;
    ++kept;
  }
  if (kept == 0) throw DegenerateInputError("sparsify: no valid pixels remain under the mask");
  return out;
}

DepthMap bilinear_densify(const SparseDepth& s) {
  if (!s.depth.same_extent(s.mask)) throw ConfigError("bilinear_densify: extent mismatch");
  const int h = s.depth.height();
  const int w = s.depth.width();
  struct Anchor {
    int y;
    int x;
    Real z;
  };
  std::vector<Anchor> anchors;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (s.mask.at(y, x)) anchors.push_back({y, x, s.depth.at(y, x)});
  if (anchors.size() < 3)
    throw DegenerateInputError("bilinear_densify: needs at least 3 valid pixels, got " +
                               std::to_string(anchors.size()));
  bool spread = false;
  const Anchor& a0 = anchors[0];
  const Anchor& a1 = anchors[1];
  for (std::size_t i = 2; i < anchors.size() && !spread; ++i) {
    const long cross = static_cast<long>(a1.y - a0.y) * (anchors[i].x - a0.x) -
                       static_cast<long>(a1.x - a0.x) * (anchors[i].y - a0.y);
    spread = cross != 0;
  }
  if (!spread) throw DegenerateInputError("bilinear_densify: valid pixels are collinear");

  constexpr std::size_t kNeighbors = 4;
  DepthMap out(h, w, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (s.mask.at(y, x)) {
        out.at(y, x) = s.depth.at(y, x);
        continue;
      }
      // Keep the four smallest squared distances; anchors arrive in row-major
      // order and only a strictly smaller distance displaces an entry.
      std::array<long, kNeighbors> best_d;
      std::array<std::size_t, kNeighbors> best_i;
      best_d.fill(std::numeric_limits<long>::max());
      best_i.fill(0);
      for (std::size_t i = 0; i < anchors.size(); ++i) {
        const long dy = anchors[i].y - y;
        const long dx = anchors[i].x - x;
        const long d = dy * dy + dx * dx;
        if (d >= best_d[kNeighbors - 1]) continue;
        std::size_t pos = kNeighbors - 1;
        while (pos > 0 && d < best_d[pos - 1]) {
          best_d[pos] = best_d[pos - 1];
          best_i[pos] = best_i[pos - 1];
          --pos;
        }
        best_d[pos] = d;
        best_i[pos] = i;
      }
      Real num = 0.0;
      Real den = 0.0;
      for (std::size_t k = 0; k < kNeighbors && k < anchors.size(); ++k) {
        const Real wgt = 1.0 / static_cast<Real>(best_d[k]);
        num += wgt * anchors[best_i[k]].z;
        den += wgt;
      }
      out.at(y, x) = num / den;
    }
  }
  return out;
}

UniformRatioSampler::UniformRatioSampler(std::uint64_t seed, Real lo, Real hi)
    : rng_(seed), lo_(lo), hi_(hi) {
  if (!(lo > 0.0 && lo <= hi && hi <= 1.0))
    throw ConfigError("ratio range must satisfy 0 < lo <= hi <= 1");
}

InjectionRatio UniformRatioSampler::next() {
  return InjectionRatio(std::min(hi_, rng_.uniform(lo_, hi_)));
}

}  // namespace sparsefuse
