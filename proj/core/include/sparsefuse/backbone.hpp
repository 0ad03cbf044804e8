#pragma once

// Convolutional stand-in for the visual branch: a five-level pyramid
// encoder, a coarse-to-fine depth decoder, and the global metric-scale head.

#include <array>
#include <string>
#include <vector>

#include "sparsefuse/fusion_neck.hpp"

namespace sparsefuse {

/// Full-width visual pyramid channels in stride order (stride 1 ... 16).
inline constexpr std::array<int, kPyramidLevels> kFullVisualChannels{32, 64, 128, 256, 384};

struct BackboneConfig {
  Real width_multiplier = 0.125;

  /// round(multiplier * full widths), at least 1, by stride level.
  std::array<int, kPyramidLevels> channels() const;
};

class VisualBackbone {
 public:
  VisualBackbone() = default;
  VisualBackbone(const BackboneConfig& cfg, Rng& rng);

  /// Pyramid at strides 1..16 plus the global token (mean of the deepest level).
  std::pair<Pyramid, std::vector<Real>> forward(const FeatureMap& rgb);
  void backward(const Pyramid& d_pyramid, std::span<const Real> d_token);
  void collect(const std::string& prefix, ParamSet& set);
  const std::array<int, kPyramidLevels>& channels() const { return channels_; }

 private:
  std::array<int, kPyramidLevels> channels_{};
  std::array<ConvRelu, kPyramidLevels> down_;
  std::array<ConvRelu, kPyramidLevels> refine_;
  std::array<int, 2> deepest_extent_{};
};

/// Upsample, 1x1 projection, skip add, 3x3 conv + ReLU per level, then a
/// 3x3 conv to one raw log-depth channel.
class DepthDecoder {
 public:
  DepthDecoder() = default;
  DepthDecoder(const std::array<int, kPyramidLevels>& channels, Real raw_bias, Rng& rng);

  /// Raw log relative depth at level-0 resolution.
  FeatureMap forward(const Pyramid& pyramid);
  Pyramid backward(const FeatureMap& d_raw);
  void collect(const std::string& prefix, ParamSet& set);

  Conv2d& head() { return head_; }

 private:
  std::array<int, kPyramidLevels> channels_{};
  std::array<Conv2d, kPyramidLevels - 1> project_;  // level s+1 -> level s widths
  std::array<ConvRelu, kPyramidLevels - 1> refine_;
  Conv2d head_;
  std::array<std::array<int, 2>, kPyramidLevels> extents_{};
};

/// Relative depth exp(raw) from a (fused) pyramid.
DepthMap decode(const Pyramid& pyramid, DepthDecoder& decoder);

class ScaleHead {
 public:
  ScaleHead() = default;
  ScaleHead(int token_width, int sparse_width, int hidden, Rng& rng);

  /// Raw log-scale from [token; sparse_global].
  Real forward(std::span<const Real> token, std::span<const Real> sparse_global);
  /// Returns (dL/d token, dL/d sparse_global).
  std::pair<std::vector<Real>, std::vector<Real>> backward(Real d_raw);
  void collect(const std::string& prefix, ParamSet& set);

  int token_width() const { return token_width_; }
  int sparse_width() const { return sparse_width_; }
  Dense fc1;
  Dense fc2;

 private:
  int token_width_ = 0;
  int sparse_width_ = 0;
  std::vector<Real> hidden_;
};

/// exp of the head output; strictly positive.
Real predict_scale(std::span<const Real> token, std::span<const Real> sparse_global,
                   ScaleHead& head);

}  // namespace sparsefuse
