#include "sparsefuse/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>
#include <ostream>

#include "sparsefuse/evaluator.hpp"
#include "sparsefuse/rng.hpp"

namespace sparsefuse {

void TrainConfig::validate() const {
  if (steps < 1) throw ConfigError("train: steps must be at least 1");
  if (pretrain_steps < 0 || pretrain_steps > steps)
    throw ConfigError("train: pretrain_steps must lie in [0, steps]");
  if (batch_size < 1) throw ConfigError("train: batch_size must be at least 1");
  if (!(learning_rate >= 0)) throw ConfigError("train: learning_rate must be nonnegative");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1))
    throw ConfigError("train: Adam betas must lie in [0, 1)");
  if (!(adam_epsilon > 0)) throw ConfigError("train: Adam epsilon must be positive");
  if (!(weight_decay >= 0)) throw ConfigError("train: weight_decay must be nonnegative");
  if (!(ratio_min > 0 && ratio_min <= ratio_max && ratio_max <= 1))
    throw ConfigError("train: ratio range must satisfy 0 < min <= max <= 1");
}

Adam::Adam(Real lr, Real beta1, Real beta2, Real epsilon, Real weight_decay)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(epsilon), weight_decay_(weight_decay) {}

void Adam::reset() {
  t_ = 0;
  m_.clear();
  v_.clear();
}

void Adam::step(ParamSet& set) {
  if (m_.empty()) {
    for (const auto& p : set.params) {
      m_.emplace_back(p.value.size(), 0.0);
      v_.emplace_back(p.value.size(), 0.0);
    }
  }
  if (m_.size() != set.params.size()) throw InternalError("Adam: parameter layout changed");
  ++t_;
  const Real c1 = 1.0 - std::pow(beta1_, static_cast<Real>(t_));
  const Real c2 = 1.0 - std::pow(beta2_, static_cast<Real>(t_));
  for (std::size_t k = 0; k < set.params.size(); ++k) {
    auto& p = set.params[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const Real g = p.grad[i] + weight_decay_ * p.value[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      p.value[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

std::vector<TrainFrame> make_train_frames(std::span<const std::uint64_t> scene_seeds, int height,
                                          int width, const LossWeights& lw) {
  std::vector<TrainFrame> out;
  out.reserve(scene_seeds.size());
  for (std::uint64_t s : scene_seeds) {
    Frame f = render_seed(s, height, width);
    PixelWeightMap w = base_weights(f.depth, f.validity, f.intrinsics, lw);
    out.push_back({std::move(f), std::move(w)});
  }
  return out;
}

void TrainLog::write_csv(std::ostream& os) const {
  os << "step,ratio,loss,grad_norm\n";
  for (const auto& r : records)
    os << r.step << ',' << format_value(r.ratio) << ',' << format_value(r.loss) << ','
       << format_value(r.grad_norm) << '\n';
}

InjectionRatio step_ratio(const TrainConfig& cfg, int step) {
  UniformRatioSampler s(derive_seed(cfg.seed, {0x52415449ull, static_cast<std::uint64_t>(step)}),
                        cfg.ratio_min, cfg.ratio_max);
  return s.next();
}

SparseDepth train_injection(const Frame& f, InjectionRatio ratio, const TrainConfig& cfg, int step,
                            int slot) {
  const std::uint64_t seed = derive_seed(
      cfg.seed, {0x4D41534Bull, static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(slot)});
  return sparsify(f.depth, sample_mask(f.depth.height(), f.depth.width(), ratio, seed, f.validity));
}

namespace {

void dump_sample(const Frame& f, InjectionRatio ratio, int step, int slot, const LossResult& r,
                 const DepthPrediction& p) {
  std::cerr << "numeric abort at step " << step << ", batch slot " << slot
            << ": scene seed " << f.seed << ", ratio " << ratio.value() << ", loss " << r.total
            << " (base " << r.base << ", consistency " << r.consistency << "), predicted scale "
            << p.scale << '\n';
  std::size_t bad = 0;
  for (std::size_t i = 0; i < p.depth.size(); ++i) bad += !std::isfinite(p.depth[i]);
  std::cerr << "  non-finite predicted pixels: " << bad << " of " << p.depth.size() << '\n';
}

}  // namespace

TrainRecord train_step(DepthModel& model, Adam& opt, std::span<const TrainFrame* const> batch,
                       const TrainConfig& cfg, const LossWeights& lw, int step) {
  if (batch.empty()) throw PreconditionError("train_step: empty batch");
  const InjectionRatio ratio = step_ratio(cfg, step);
  ParamSet set = model.parameters();
  set.zero_grad();
  const Real inv_batch = 1.0 / static_cast<Real>(batch.size());
  Real loss = 0.0;
  for (std::size_t k = 0; k < batch.size(); ++k) {
    const Frame& f = batch[k]->frame;
    const SparseDepth s = train_injection(f, ratio, cfg, step, static_cast<int>(k));
    const DepthPrediction p = model.forward(f.rgb, &s, /*training=*/true);
    LossResult r = total_loss(p, f.depth, f.validity, batch[k]->weights, s, lw);
    if (!std::isfinite(r.total)) {
      dump_sample(f, ratio, step, static_cast<int>(k), r, p);
      throw NumericAbort("non-finite loss at step " + std::to_string(step));
    }
    for (std::size_t i = 0; i < r.d_log_depth.size(); ++i) r.d_log_depth[i] *= inv_batch;
    model.backward(r.d_log_depth);
    loss += r.total * inv_batch;
  }
  Real sq = 0.0;
  for (const auto& p : set.params)
    for (Real g : p.grad) sq += g * g;
  const Real grad_norm = std::sqrt(sq);
  if (!std::isfinite(grad_norm)) throw NumericAbort("non-finite gradient at step " + std::to_string(step));
  opt.step(set);
  return {step, ratio.value(), loss, grad_norm};
}

std::vector<std::size_t> batch_indices(std::size_t n_frames, const TrainConfig& cfg, int step) {
  if (n_frames == 0) throw PreconditionError("batch_indices: no training frames");
  std::vector<std::size_t> out;
  const std::size_t b = static_cast<std::size_t>(cfg.batch_size);
  for (std::size_t k = 0; k < b; ++k) {
    const std::size_t flat = static_cast<std::size_t>(step) * b + k;
    const std::size_t epoch = flat / n_frames;
    const std::size_t pos = flat % n_frames;
    // Fisher-Yates permutation of the epoch, regenerated on demand.
    std::vector<std::size_t> perm(n_frames);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(derive_seed(cfg.seed, {0x45504F43ull, epoch}));
    for (std::size_t i = n_frames - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
    out.push_back(perm[pos]);
  }
  return out;
}

TrainLog train(DepthModel& model, const std::vector<TrainFrame>& frames, const TrainConfig& cfg,
               const LossWeights& lw, std::ostream* progress) {
  cfg.validate();
  lw.validate();
  if (frames.empty()) throw PreconditionError("train: no training frames");
  TrainLog log;
  Adam opt(cfg);
  const int switch_on = cfg.monocular ? cfg.steps : cfg.pretrain_steps;
  model.set_fusion_enabled(switch_on == 0);
  for (int step = 0; step < cfg.steps; ++step) {
    if (step == switch_on && step > 0) {
      model.set_fusion_enabled(true);
      opt.reset();
    }
    std::vector<const TrainFrame*> batch;
    for (std::size_t i : batch_indices(frames.size(), cfg, step)) batch.push_back(&frames[i]);
    log.records.push_back(train_step(model, opt, batch, cfg, lw, step));
    if (progress && (step + 1) % 50 == 0) {
      Real mean = 0.0;
      for (int k = step - 49; k <= step; ++k) mean += log.records[k].loss;
      *progress << "step " << step + 1 << "/" << cfg.steps << " mean loss " << mean / 50.0
                << (model.fusion_enabled() ? "" : " (monocular)") << '\n';
    }
  }
  return log;
}

namespace {

std::string module_of(const std::string& name) { return name.substr(0, name.find('.')); }

}  // namespace

GradCheckReport grad_check(DepthModel& model, const Frame& frame, const SparseDepth& sparse,
                           const LossWeights& lw, const GradCheckOptions& opt) {
  if (frame.rgb.size() > 3u * 32u * 32u)
    throw PreconditionError("grad_check: sample larger than 3x32x32");
  ParamSet set = model.parameters();
  std::vector<std::vector<Real>> buffers;
  for (const auto& b : set.buffers) buffers.emplace_back(b.value.begin(), b.value.end());
  auto restore = [&] {
    for (std::size_t k = 0; k < buffers.size(); ++k)
      std::copy(buffers[k].begin(), buffers[k].end(), set.buffers[k].value.begin());
  };
  const PixelWeightMap weights =
      base_weights(frame.depth, frame.validity, frame.intrinsics, lw);
  const bool probe_was = kink_probe::enabled();
  kink_probe::enable(true);

  auto evaluate = [&](std::uint64_t* fingerprint) {
    restore();
    kink_probe::reset();
    const DepthPrediction p = model.forward(frame.rgb, &sparse, /*training=*/true);
    const LossResult r = total_loss(p, frame.depth, frame.validity, weights, sparse, lw);
    if (fingerprint) *fingerprint = kink_probe::fingerprint();
    return r;
  };

  GradCheckReport report;
  std::uint64_t base_fp = 0;
  set.zero_grad();
  {
    const LossResult r = evaluate(&base_fp);
    report.base_loss_term = r.base;
    report.consistency_term = r.consistency;
    model.backward(r.d_log_depth);
  }
  std::vector<std::vector<Real>> analytic;
  for (const auto& p : set.params) analytic.emplace_back(p.grad.begin(), p.grad.end());

  std::map<std::string, std::vector<std::size_t>> by_module;
  std::vector<std::string> order;
  for (std::size_t k = 0; k < set.params.size(); ++k) {
    const std::string m = module_of(set.params[k].name);
    if (!by_module.count(m)) order.push_back(m);
    by_module[m].push_back(k);
  }

  Rng rng(derive_seed(opt.seed, {0x47524144ull}));
  for (std::size_t mi = 0; mi < order.size(); ++mi) {
    const auto& arrays = by_module[order[mi]];
    std::size_t total = 0;
    for (std::size_t k : arrays) total += set.params[k].value.size();
    if (total == 0) continue;
    const std::size_t quota = opt.samples / order.size() + (mi < opt.samples % order.size());
    std::size_t taken = 0;
    for (std::size_t attempt = 0; taken < quota && attempt < 20 * quota; ++attempt) {
      std::size_t flat = rng.below(total);
      std::size_t k = 0;
      for (std::size_t a : arrays) {
        if (flat < set.params[a].value.size()) {
          k = a;
          break;
        }
        flat -= set.params[a].value.size();
      }
      Real& theta = set.params[k].value[flat];
      const Real saved = theta;
      std::uint64_t fp_plus = 0;
      std::uint64_t fp_minus = 0;
      theta = saved + opt.h;
      const Real lp = evaluate(&fp_plus).total;
      theta = saved - opt.h;
      const Real lm = evaluate(&fp_minus).total;
      theta = saved;
      if (fp_plus != base_fp || fp_minus != base_fp) {
        ++report.skipped_kinks;
        continue;
      }
      GradCheckEntry e;
      e.name = set.params[k].name;
      e.index = flat;
      e.analytic = analytic[k][flat];
      e.numeric = (lp - lm) / (2.0 * opt.h);
      e.rel_error = std::abs(e.analytic - e.numeric) /
                    std::max({std::abs(e.analytic), std::abs(e.numeric), opt.floor});
      if (e.rel_error > report.max_rel_error) {
        report.max_rel_error = e.rel_error;
        report.worst = e.name + "[" + std::to_string(e.index) + "]";
      }
      report.entries.push_back(std::move(e));
      ++taken;
    }
  }
  restore();
  kink_probe::enable(probe_was);
  return report;
}

TrainedPair train_pair(const ModelConfig& model_cfg, std::uint64_t model_seed,
                       const std::vector<TrainFrame>& frames, const TrainConfig& cfg,
                       const LossWeights& lw, std::ostream* progress) {
  ModelConfig pc = model_cfg;
  pc.encoder = EncoderKind::partial_conv;
  ModelConfig ip = model_cfg;
  ip.encoder = EncoderKind::interpolation;
  TrainedPair out{DepthModel(pc, model_seed), DepthModel(ip, model_seed), {}, {}};
  if (progress) *progress << "training partialconv encoder\n";
  out.partial_conv_log = train(out.partial_conv, frames, cfg, lw, progress);
  if (progress) *progress << "training interpolation encoder\n";
  out.interpolation_log = train(out.interpolation, frames, cfg, lw, progress);
  return out;
}

}  // namespace sparsefuse
