#include "sparsefuse/losses.hpp"

#include <cmath>
#include <iostream>

#include "sparsefuse/ops.hpp"

namespace sparsefuse {

void LossWeights::validate() const {
  if (base < 0 || consistency < 0 || edge_alpha < 0)
    throw ConfigError("loss weights must be nonnegative");
  if (!(edge_tau > 0)) throw ConfigError("edge tau must be positive");
}

PixelWeightMap edge_weights(const PointMap& points, const MaskMap& valid, Real alpha, Real tau) {
  const int h = valid.height();
  const int w = valid.width();
  if (points.size() != valid.size()) throw ConfigError("edge_weights: point map extent mismatch");
  PixelWeightMap out(h, w, 0.0);
  constexpr int kOffsets[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!valid.at(y, x)) continue;
      const auto& p = points[static_cast<std::size_t>(y) * w + x];
      Real d_max = 0.0;
      for (const auto& o : kOffsets) {
        const int yy = y + o[0];
        const int xx = x + o[1];
        if (yy < 0 || yy >= h || xx < 0 || xx >= w || !valid.at(yy, xx)) continue;
        const auto& q = points[static_cast<std::size_t>(yy) * w + xx];
        const Real d = std::sqrt((p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1]) +
                                 (p[2] - q[2]) * (p[2] - q[2]));
        d_max = std::max(d_max, d);
      }
      out.at(y, x) = 1.0 + alpha * std::min(1.0, d_max / tau);
    }
  return out;
}

PixelWeightMap logdist_weights(const DepthMap& gt, const MaskMap& valid) {
  if (!gt.same_extent(valid)) throw ConfigError("logdist_weights: extent mismatch");
  PixelWeightMap out(gt.height(), gt.width(), 0.0);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!valid[i]) continue;
    if (!(gt[i] > 0.0)) throw DataError("logdist_weights: nonpositive depth at a valid pixel");
    out[i] = 1.0 / std::log1p(gt[i]);
  }
  return out;
}

Real consistency_loss(const DepthMap& pred, const SparseDepth& sparse) {
  if (!pred.same_extent(sparse.depth) || !pred.same_extent(sparse.mask))
    throw ConfigError("consistency_loss: extent mismatch");
  Real sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!sparse.mask[i]) continue;
    sum += std::abs(pred[i] - sparse.depth[i]);
    ++n;
  }
  if (n == 0) {
    std::cerr << "warning: consistency_loss called with an empty sparse mask; returning 0\n";
    return 0.0;
  }
  return sum / static_cast<Real>(n);
}

PixelWeightMap base_weights(const DepthMap& gt, const MaskMap& valid, const Intrinsics& intr,
                            const LossWeights& lw) {
  PixelWeightMap e = edge_weights(backproject(gt, intr), valid, lw.edge_alpha, lw.edge_tau);
  const PixelWeightMap l = logdist_weights(gt, valid);
  for (std::size_t i = 0; i < e.size(); ++i) e[i] *= l[i];
  return e;
}

LossResult total_loss(const DepthPrediction& pred, const DepthMap& gt, const MaskMap& gt_valid,
                      const SparseDepth& sparse, const Intrinsics& intr, const LossWeights& lw) {
  return total_loss(pred, gt, gt_valid, base_weights(gt, gt_valid, intr, lw), sparse, lw);
}

namespace {
Real sign_of(Real v) {
  kink_probe::record(v > 0.0);
  return v > 0.0 ? 1.0 : v < 0.0 ? -1.0 : 0.0;
}
}  // namespace

LossResult total_loss(const DepthPrediction& pred, const DepthMap& gt, const MaskMap& gt_valid,
                      const PixelWeightMap& weights, const SparseDepth& sparse,
                      const LossWeights& lw) {
  if (!pred.depth.same_extent(gt) || !gt.same_extent(gt_valid) || !gt.same_extent(weights) ||
      !gt.same_extent(sparse.depth))
    throw ConfigError("total_loss: extent mismatch");
  LossResult r;
  r.d_log_depth = DepthMap(gt.height(), gt.width(), 0.0);
  std::size_t n_valid = 0;
  for (auto b : gt_valid.data()) n_valid += b;
  if (n_valid > 0) {
    const Real inv = 1.0 / static_cast<Real>(n_valid);
    Real sum = 0.0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (!gt_valid[i]) continue;
      const Real diff = pred.log_depth[i] - std::log(gt[i]);
      sum += weights[i] * std::abs(diff);
      r.d_log_depth[i] += lw.base * weights[i] * sign_of(diff) * inv;
    }
    r.base = sum * inv;
  }
  const std::size_t n_sparse = valid_count(sparse.mask);
  if (n_sparse > 0) {
    const Real inv = 1.0 / static_cast<Real>(n_sparse);
    Real sum = 0.0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (!sparse.mask[i]) continue;
      const Real diff = pred.depth[i] - sparse.depth[i];
      sum += std::abs(diff);
      r.d_log_depth[i] += lw.consistency * sign_of(diff) * pred.depth[i] * inv;
    }
    r.consistency = sum * inv;
  } else {
    r.consistency = consistency_loss(pred.depth, sparse);
  }
  r.total = lw.base * r.base + lw.consistency * r.consistency;
  return r;
}

}  // namespace sparsefuse
