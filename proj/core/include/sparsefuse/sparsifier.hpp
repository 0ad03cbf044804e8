#pragma once

// Simulated LiDAR injection: exact-count random masks, sparse depth
// extraction, and the dense pre-interpolation used by the ablation baseline.

#include <cstddef>
#include <cstdint>

#include "sparsefuse/rng.hpp"
#include "sparsefuse/tensor.hpp"

namespace sparsefuse {

/// Fraction of image pixels carrying a sparse depth value, in (0, 1].
class InjectionRatio {
 public:
  explicit InjectionRatio(Real value);
  Real value() const { return value_; }

 private:
  Real value_;
};

inline constexpr Real kTrainRatioMin = 0.005;
inline constexpr Real kTrainRatioMax = 0.30;

/// Sparse depth with its validity mask. Invalid pixels hold exactly 0.
struct SparseDepth {
  DepthMap depth;
  MaskMap mask;
};

/// Number of pixels a mask at `ratio` carries on an h x w image.
std::size_t injection_count(int height, int width, InjectionRatio ratio);

/// Exactly injection_count() bits set at uniformly random positions.
MaskMap sample_mask(int height, int width, InjectionRatio ratio, std::uint64_t seed);

/// As above, but positions outside `allowed` are rejected and the draw
/// continues along the same random permutation. Returns fewer bits only when
/// `allowed` itself has fewer than the target count.
MaskMap sample_mask(int height, int width, InjectionRatio ratio, std::uint64_t seed,
                    const MaskMap& allowed);

/// gt masked by `mask`; pixels where gt is not a positive finite value are
/// dropped from the output mask.
SparseDepth sparsify(const DepthMap& gt, const MaskMap& mask);

/// Dense map from sparse anchors: inverse-squared-distance weighting over the
/// four nearest valid pixels (ties broken in row-major order); valid pixels
/// pass through exactly. Needs three or more non-collinear anchors.
DepthMap bilinear_densify(const SparseDepth& s);

/// I.i.d. injection ratios, uniform on [lo, hi].
class UniformRatioSampler {
 public:
  explicit UniformRatioSampler(std::uint64_t seed, Real lo = kTrainRatioMin,
                               Real hi = kTrainRatioMax);
  InjectionRatio next();
  Real lo() const { return lo_; }
  Real hi() const { return hi_; }

 private:
  Rng rng_;
  Real lo_;
  Real hi_;
};

}  // namespace sparsefuse
