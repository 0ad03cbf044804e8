#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sparsefuse/backbone.hpp"
#include "sparsefuse/fusion_neck.hpp"
#include "sparsefuse/partial_encoder.hpp"

namespace sparsefuse {

/// How the sparse branch sees the injected depth.
enum class EncoderKind {
  /// nn_fill, then partial convolutions over the true validity mask.
  partial_conv,
  /// bilinear_densify, then the same stages with an all-valid mask
  /// (i.e. ordinary convolutions on a pre-interpolated dense map).
  interpolation,
};

std::string to_string(EncoderKind kind);
EncoderKind encoder_kind_from_string(const std::string& s);

struct ModelConfig {
  BackboneConfig backbone;
  /// Multiplier applied to the sparse encoder's full widths [32 .. 512].
  Real sparse_width_multiplier = 0.125;
  /// At 0.5% injection the nearest sample is often > 8 px away; 128 fills
  /// the whole toy frame.
  int fill_radius = 128;
  int encoder_kernel = 3;
  int se_reduction = 4;
  Real bn_gamma_init = 0.01;
  Real bn_momentum = 0.1;
  Real bn_epsilon = 1e-5;
  bool bn_frozen = true;
  int scale_hidden = 16;
  /// Initial decoder log-depth bias (meters, before exp).
  Real raw_depth_bias = 3.0;
  EncoderKind encoder = EncoderKind::partial_conv;

  SparseEncoderConfig encoder_config() const;
  NeckConfig neck_config() const;
};

struct DepthPrediction {
  DepthMap depth;      ///< meters, scale * relative
  DepthMap log_depth;  ///< ln(depth), computed without a round trip through exp
  Real scale = 1.0;
};

/// Visual backbone, sparse encoder, fusion neck, decoder and scale head.
///
/// With fusion disabled the sparse branch is skipped: the neck is the
/// identity and the scale head receives zeros in place of the global sparse
/// feature. This is the monocular reduction of the model.
class DepthModel {
 public:
  DepthModel() = default;
  DepthModel(const ModelConfig& cfg, std::uint64_t seed);

  /// `sparse` may be null only when fusion is disabled.
  DepthPrediction forward(const FeatureMap& rgb, const SparseDepth* sparse, bool training);
  /// Backpropagates dL/d ln(depth) from the latest forward().
  void backward(const DepthMap& d_log_depth);

  ParamSet parameters();
  const ModelConfig& config() const { return cfg_; }

  bool fusion_enabled() const { return fusion_enabled_; }
  void set_fusion_enabled(bool on) { fusion_enabled_ = on; }

  VisualBackbone& backbone() { return backbone_; }
  SparseEncoder& encoder() { return encoder_; }
  FusionNeck& neck() { return neck_; }
  DepthDecoder& decoder() { return decoder_; }
  ScaleHead& scale_head() { return head_; }

 private:
  MaskedFeature prepare_sparse(const SparseDepth& s) const;

  ModelConfig cfg_;
  bool fusion_enabled_ = true;
  VisualBackbone backbone_;
  SparseEncoder encoder_;
  FusionNeck neck_;
  DepthDecoder decoder_;
  ScaleHead head_;
  bool used_fusion_ = false;
  int height_ = 0;
  int width_ = 0;
};

/// depth = predict_scale(...) * decode(neck_forward(visual, encode(sparse))).
DepthPrediction full_forward(const FeatureMap& rgb, const SparseDepth& sparse, DepthModel& model,
                             bool training = false);

}  // namespace sparsefuse
