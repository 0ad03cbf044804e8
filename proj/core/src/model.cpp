#include "sparsefuse/model.hpp"

#include <cmath>

#include "sparsefuse/sparsifier.hpp"

namespace sparsefuse {

std::string to_string(EncoderKind kind) {
  return kind == EncoderKind::partial_conv ? "partialconv" : "interpolation";
}

EncoderKind encoder_kind_from_string(const std::string& s) {
  if (s == "partialconv") return EncoderKind::partial_conv;
  if (s == "interpolation") return EncoderKind::interpolation;
  throw ConfigError("unknown encoder kind '" + s + "' (expected partialconv or interpolation)");
}

SparseEncoderConfig ModelConfig::encoder_config() const {
  SparseEncoderConfig e = SparseEncoderConfig::scaled(sparse_width_multiplier);
  e.fill_radius = fill_radius;
  e.kernel_size = encoder_kernel;
  return e;
}

NeckConfig ModelConfig::neck_config() const {
  NeckConfig n;
  n.visual_channels = backbone.channels();
  n.sparse_channels = encoder_config().stage_channels;
  n.se_reduction = se_reduction;
  n.bn_gamma_init = bn_gamma_init;
  n.bn_momentum = bn_momentum;
  n.bn_epsilon = bn_epsilon;
  n.bn_frozen = bn_frozen;
  return n;
}

DepthModel::DepthModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  // Each component draws from its own stream so widths of one component do
  // not shift the initialization of another.
  Rng rb(derive_seed(seed, {1}));
  Rng re(derive_seed(seed, {2}));
  Rng rn(derive_seed(seed, {3}));
  Rng rd(derive_seed(seed, {4}));
  Rng rh(derive_seed(seed, {5}));
  backbone_ = VisualBackbone(cfg_.backbone, rb);
  encoder_ = SparseEncoder(cfg_.encoder_config(), re);
  neck_ = FusionNeck(cfg_.neck_config(), rn);
  decoder_ = DepthDecoder(backbone_.channels(), cfg_.raw_depth_bias, rd);
  head_ = ScaleHead(backbone_.channels().back(), encoder_.config().stage_channels.back(),
                    cfg_.scale_hidden, rh);
}

MaskedFeature DepthModel::prepare_sparse(const SparseDepth& s) const {
  if (cfg_.encoder == EncoderKind::partial_conv)
    return sparse_input(nn_fill(s, cfg_.fill_radius));
  const DepthMap dense = bilinear_densify(s);
  return sparse_input(SparseDepth{dense, MaskMap(dense.height(), dense.width(), 1)});
}

DepthPrediction DepthModel::forward(const FeatureMap& rgb, const SparseDepth* sparse,
                                    bool training) {
  auto [pyramid, token] = backbone_.forward(rgb);
  height_ = rgb.height();
  width_ = rgb.width();
  std::vector<Real> sparse_global(head_.sparse_width(), 0.0);
  used_fusion_ = fusion_enabled_;
  Pyramid fused;
  if (used_fusion_) {
    if (!sparse) throw ConfigError("fusion-enabled forward requires sparse depth");
    if (sparse->depth.height() != rgb.height() || sparse->depth.width() != rgb.width())
      throw ConfigError("sparse depth extent differs from the image extent");
    SparseEncoder::Output enc = encoder_.encode(prepare_sparse(*sparse));
    sparse_global = enc.global;
    fused = neck_.forward(pyramid, enc.stages, training);
  } else {
    fused = std::move(pyramid);
  }
  const FeatureMap raw = decoder_.forward(fused);
  const Real log_scale = head_.forward(token, sparse_global);

  DepthPrediction out;
  out.scale = std::exp(log_scale);
  out.log_depth = DepthMap(raw.height(), raw.width());
  out.depth = DepthMap(raw.height(), raw.width());
  const auto r = raw.channel(0);
  for (std::size_t i = 0; i < r.size(); ++i) {
    out.log_depth[i] = log_scale + r[i];
    out.depth[i] = out.scale * std::exp(r[i]);
  }
  return out;
}

void DepthModel::backward(const DepthMap& d_log_depth) {
  if (d_log_depth.height() != height_ || d_log_depth.width() != width_)
    throw InternalError("DepthModel::backward: gradient extent mismatch");
  FeatureMap d_raw(1, height_, width_);
  Real d_log_scale = 0.0;
  auto dr = d_raw.channel(0);
  for (std::size_t i = 0; i < d_log_depth.size(); ++i) {
    dr[i] = d_log_depth[i];
    d_log_scale += d_log_depth[i];
  }
  auto [d_token, d_global] = head_.backward(d_log_scale);
  Pyramid d_fused = decoder_.backward(d_raw);
  if (used_fusion_) {
    auto [d_visual, d_sparse] = neck_.backward(d_fused);
    encoder_.backward(d_sparse, d_global);
    backbone_.backward(d_visual, d_token);
  } else {
    backbone_.backward(d_fused, d_token);
  }
}

ParamSet DepthModel::parameters() {
  ParamSet set;
  backbone_.collect("backbone", set);
  encoder_.collect("encoder", set);
  neck_.collect("neck", set);
  decoder_.collect("decoder", set);
  head_.collect("scale_head", set);
  return set;
}

DepthPrediction full_forward(const FeatureMap& rgb, const SparseDepth& sparse, DepthModel& model,
                             bool training) {
  return model.forward(rgb, &sparse, training);
}

}  // namespace sparsefuse
