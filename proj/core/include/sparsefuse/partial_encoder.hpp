#pragma once

// Sparse-geometry branch: nearest-neighbor filling of the sparse depth,
// followed by five mask-propagating partial-convolution stages.

#include <array>
#include <string>
#include <vector>

#include "sparsefuse/layers.hpp"
#include "sparsefuse/sparsifier.hpp"

namespace sparsefuse {

inline constexpr int kPyramidLevels = 5;

/// Features paired with the validity of each site. Features are exactly 0
/// wherever the mask is 0.
struct MaskedFeature {
  FeatureMap features;
  MaskMap mask;
};

/// Fills every invalid pixel within Chebyshev distance `radius` of a valid
/// one with the depth of its Euclidean-nearest valid pixel (ties: smaller
/// row, then smaller column). Pixels farther away stay invalid.
SparseDepth nn_fill(const SparseDepth& s, int radius);

/// Masked convolution renormalized by window coverage.
///
/// With S valid inputs among the K in-image taps of a site's window, a site
/// with S > 0 gets (sum over valid taps) * K/S + bias and becomes valid; a
/// site with S = 0 is 0 and invalid. Counting K over in-image taps makes a
/// fully valid input reproduce conv2d() bitwise, including at the borders.
///
/// `scale_out`, when given, receives K/S per output site (0 where S = 0).
MaskedFeature partial_conv2d(const MaskedFeature& x, const ConvParams& p,
                             std::vector<Real>* scale_out = nullptr);

/// Stateful partial convolution with a backward pass. Masks are treated as
/// constants: gradients flow through feature values only.
class PartialConvLayer {
 public:
  PartialConvLayer() = default;
  PartialConvLayer(int in_channels, int out_channels, int kernel_size, int stride, Rng& rng);

  MaskedFeature forward(const MaskedFeature& x);
  /// dL/d(input features), zero at invalid input sites.
  FeatureMap backward(const FeatureMap& dy);
  void collect(const std::string& prefix, ParamSet& set) { conv_.collect(prefix, set); }

  ConvParams& params() { return conv_.params; }
  const ConvParams& params() const { return conv_.params; }

 private:
  Conv2d conv_;
  MaskedFeature input_;
  MaskMap out_mask_;
  std::vector<Real> scale_;
};

struct SparseEncoderConfig {
  std::array<int, kPyramidLevels> stage_channels{32, 64, 128, 256, 512};
  std::array<int, kPyramidLevels> stage_strides{1, 2, 2, 2, 2};
  int kernel_size = 3;
  int fill_radius = 8;

  /// Channel widths multiplied by `multiplier` (rounded, at least 1).
  static SparseEncoderConfig scaled(Real multiplier);
  void validate() const;
};

/// Single-channel log-depth input at valid pixels, 0 elsewhere.
MaskedFeature sparse_input(const SparseDepth& s);

class SparseEncoder {
 public:
  struct Output {
    std::array<MaskedFeature, kPyramidLevels> stages;
    /// Mask-weighted mean of the deepest stage.
    std::vector<Real> global;
  };

  SparseEncoder() = default;
  SparseEncoder(const SparseEncoderConfig& cfg, Rng& rng);

  /// nn_fill, then the five stages.
  Output forward(const SparseDepth& s);
  /// The five stages on an already prepared input.
  Output encode(const MaskedFeature& input);

  /// Gradients w.r.t. each stage's features (empty maps are skipped) and the
  /// global feature; accumulates parameter gradients.
  void backward(const std::array<FeatureMap, kPyramidLevels>& d_stages,
                std::span<const Real> d_global);

  void collect(const std::string& prefix, ParamSet& set);
  const SparseEncoderConfig& config() const { return cfg_; }
  PartialConvLayer& stage(int i) { return stages_[i]; }

 private:
  SparseEncoderConfig cfg_;
  std::array<PartialConvLayer, kPyramidLevels> stages_;
  std::array<MaskedFeature, kPyramidLevels> outputs_;
  std::size_t deepest_valid_ = 0;
};

/// encode() as a free function for callers that only need the forward pass.
SparseEncoder::Output encode(const SparseDepth& s, SparseEncoder& encoder);

}  // namespace sparsefuse
