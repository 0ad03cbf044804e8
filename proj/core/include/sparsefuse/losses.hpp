#pragma once

#include "sparsefuse/model.hpp"
#include "sparsefuse/scene.hpp"
#include "sparsefuse/sparsifier.hpp"

namespace sparsefuse {

struct LossWeights {
  Real base = 1.0;
  /// The consistency term is in meters; at 0.5 it swamps the log-depth term.
  Real consistency = 0.01;
  Real edge_alpha = 2.0;
  /// Neighbor distance (m) at which the edge weight saturates.
  Real edge_tau = 0.5;

  void validate() const;
};

/// w = 1 + alpha * min(1, D / tau), with D the largest 3D distance from a
/// pixel's point to its valid 4-connected neighbors' points. 0 off `valid`.
PixelWeightMap edge_weights(const PointMap& points, const MaskMap& valid, Real alpha, Real tau);

/// w = 1 / ln(1 + z) on valid pixels, 0 elsewhere. Throws DataError if a
/// valid pixel has z <= 0.
PixelWeightMap logdist_weights(const DepthMap& gt, const MaskMap& valid);

/// Mean |pred - lidar| over the sparse mask; 0 (with a warning on stderr)
/// when the mask is empty.
Real consistency_loss(const DepthMap& pred, const SparseDepth& sparse);

/// edge_weights * logdist_weights for one ground-truth frame.
PixelWeightMap base_weights(const DepthMap& gt, const MaskMap& valid, const Intrinsics& intr,
                            const LossWeights& lw);

struct LossResult {
  Real total = 0;
  Real base = 0;
  Real consistency = 0;
  /// dL/d ln(pred) per pixel.
  DepthMap d_log_depth;
};

/// base * mean_valid[w * |ln pred - ln gt|] + consistency * consistency_loss.
LossResult total_loss(const DepthPrediction& pred, const DepthMap& gt, const MaskMap& gt_valid,
                      const SparseDepth& sparse, const Intrinsics& intr, const LossWeights& lw);

/// Same, with the per-pixel base weights precomputed by base_weights().
LossResult total_loss(const DepthPrediction& pred, const DepthMap& gt, const MaskMap& gt_valid,
                      const PixelWeightMap& weights, const SparseDepth& sparse,
                      const LossWeights& lw);

}  // namespace sparsefuse
