#pragma once

#include <array>
#include <string>
#include <vector>

#include "sparsefuse/layers.hpp"
#include "sparsefuse/partial_encoder.hpp"

namespace sparsefuse {

/// Five feature maps indexed by stride level: level s has stride 2^s.
using Pyramid = std::array<FeatureMap, kPyramidLevels>;

/// Squeeze-and-excitation channel gate.
class SEBlock {
 public:
  SEBlock() = default;
  SEBlock(int channels, int reduction, Rng& rng);

  FeatureMap forward(const FeatureMap& x);
  FeatureMap backward(const FeatureMap& dy);
  void collect(const std::string& prefix, ParamSet& set);

  int channels() const { return channels_; }
  int hidden() const { return hidden_; }
  Dense fc1;
  Dense fc2;

 private:
  int channels_ = 0;
  int hidden_ = 0;
  FeatureMap input_;
  std::vector<Real> hidden_act_;
  std::vector<Real> gate_;
};

/// Stateless SE evaluation: x scaled per channel by
/// sigmoid(fc2(relu(fc1(global_avg_pool(x))))).
FeatureMap se_forward(const FeatureMap& x, const SEBlock& se);

/// out = rgb + SE(DWConv(BN(Conv1x1([rgb; depth])))).
class FusionBlock {
 public:
  FusionBlock() = default;
  FusionBlock(int rgb_channels, int depth_channels, int se_reduction, Real gamma0, Real momentum,
              Real epsilon, bool frozen_bn, Rng& rng);

  FeatureMap forward(const FeatureMap& rgb, const FeatureMap& depth, bool training);
  /// Returns (dL/d rgb, dL/d depth).
  std::pair<FeatureMap, FeatureMap> backward(const FeatureMap& dy);
  void collect(const std::string& prefix, ParamSet& set);

  Conv2d concat_conv;
  BatchNorm2d bn;
  DepthwiseConv2d dw;
  SEBlock se;

 private:
  int rgb_channels_ = 0;
  bool frozen_bn_ = false;
};

FeatureMap fuse(const FeatureMap& rgb, const MaskedFeature& depth, FusionBlock& block,
                bool training);

struct NeckConfig {
  /// Visual widths by stride level (fine to coarse).
  std::array<int, kPyramidLevels> visual_channels{32, 64, 128, 256, 384};
  /// Sparse-encoder widths by stride level, before the 1x1 adapters.
  std::array<int, kPyramidLevels> sparse_channels{32, 64, 128, 256, 512};
  int se_reduction = 4;
  Real bn_gamma_init = 0.01;
  Real bn_momentum = 0.1;
  Real bn_epsilon = 1e-5;
  /// Normalize with the running statistics in training mode too. Per-frame
  /// statistics of the coarse levels (a few dozen pixels) are too noisy to
  /// train against and differ from what inference sees.
  bool bn_frozen = false;

  /// Output widths in neck-level order L0..L4 (coarse to fine).
  std::array<int, kPyramidLevels> level_widths() const;
  void validate() const;
};

class FusionNeck {
 public:
  FusionNeck() = default;
  FusionNeck(const NeckConfig& cfg, Rng& rng);

  Pyramid forward(const Pyramid& visual, const std::array<MaskedFeature, kPyramidLevels>& sparse,
                  bool training);
  /// Returns per-level (dL/d visual, dL/d sparse features).
  std::pair<Pyramid, std::array<FeatureMap, kPyramidLevels>> backward(const Pyramid& dy);
  void collect(const std::string& prefix, ParamSet& set);

  const NeckConfig& config() const { return cfg_; }
  FusionBlock& block(int level) { return blocks_[level]; }
  Conv2d& adapter(int level) { return adapters_[level]; }
  /// Sets every block's BN gamma (e.g. 0 to switch the branch off exactly).
  void set_gamma(Real gamma);

 private:
  NeckConfig cfg_;
  std::array<Conv2d, kPyramidLevels> adapters_;
  std::array<FusionBlock, kPyramidLevels> blocks_;
};

}  // namespace sparsefuse
