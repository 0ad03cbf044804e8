#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "sparsefuse/losses.hpp"
#include "sparsefuse/model.hpp"
#include "sparsefuse/scene.hpp"

namespace sparsefuse {

struct TrainConfig {
  int steps = 1000;
  /// Leading steps run with fusion disabled (monocular path only); fusion is
  /// switched on afterwards with the neck at its near-identity init.
  int pretrain_steps = 250;
  int batch_size = 4;
  Real learning_rate = 1e-3;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real adam_epsilon = 1e-8;
  Real weight_decay = 0.0;
  std::uint64_t seed = 1;
  Real ratio_min = kTrainRatioMin;
  Real ratio_max = kTrainRatioMax;
  /// Train the monocular reduction only: fusion stays off for every step.
  bool monocular = false;

  void validate() const;
};

/// Adaptive-moment optimizer over a ParamSet. State is keyed by position, so
/// the same ParamSet layout must be passed on every step.
class Adam {
 public:
  Adam() = default;
  Adam(Real lr, Real beta1, Real beta2, Real epsilon, Real weight_decay = 0.0);
  explicit Adam(const TrainConfig& cfg)
      : Adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_epsilon, cfg.weight_decay) {}

  void step(ParamSet& set);
  void reset();
  long steps_taken() const { return t_; }

 private:
  Real lr_ = 1e-3;
  Real beta1_ = 0.9;
  Real beta2_ = 0.999;
  Real eps_ = 1e-8;
  Real weight_decay_ = 0.0;
  long t_ = 0;
  std::vector<std::vector<Real>> m_;
  std::vector<std::vector<Real>> v_;
};

/// A training frame with its per-pixel base loss weights precomputed.
struct TrainFrame {
  Frame frame;
  PixelWeightMap weights;
};

std::vector<TrainFrame> make_train_frames(std::span<const std::uint64_t> scene_seeds, int height,
                                          int width, const LossWeights& lw);

struct TrainRecord {
  int step = 0;
  Real ratio = 0;
  Real loss = 0;
  Real grad_norm = 0;
};

struct TrainLog {
  std::vector<TrainRecord> records;

  void write_csv(std::ostream& os) const;
};

/// Injection ratio used at `step`: one draw per step, shared by the batch.
InjectionRatio step_ratio(const TrainConfig& cfg, int step);

/// Sparse injection for frame `slot` of the batch at `step`.
SparseDepth train_injection(const Frame& f, InjectionRatio ratio, const TrainConfig& cfg, int step,
                            int slot);

/// One optimizer step on `batch`. Gradients are the batch mean of per-frame
/// gradients. Throws NumericAbort (after dumping the sample to stderr) on a
/// non-finite loss.
TrainRecord train_step(DepthModel& model, Adam& opt, std::span<const TrainFrame* const> batch,
                       const TrainConfig& cfg, const LossWeights& lw, int step);

/// Frames used at `step`: a per-epoch shuffle of the training set.
std::vector<std::size_t> batch_indices(std::size_t n_frames, const TrainConfig& cfg, int step);

/// Full schedule: monocular pretraining, fusion switch-on (optimizer reset),
/// then fused training. `progress`, when set, receives one line per 50 steps.
TrainLog train(DepthModel& model, const std::vector<TrainFrame>& frames, const TrainConfig& cfg,
               const LossWeights& lw, std::ostream* progress = nullptr);

struct GradCheckEntry {
  std::string name;
  std::size_t index = 0;
  Real analytic = 0;
  Real numeric = 0;
  Real rel_error = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  /// Samples dropped because +h / -h evaluations crossed a ReLU or |.| kink.
  std::size_t skipped_kinks = 0;
  Real max_rel_error = 0;
  std::string worst;
  Real base_loss_term = 0;
  Real consistency_term = 0;
};

struct GradCheckOptions {
  std::size_t samples = 240;
  Real h = 1e-3;
  /// Denominator floor: |a - n| / max(|a|, |n|, floor).
  Real floor = 1e-6;
  std::uint64_t seed = 0;
};

/// Central finite differences vs. the analytic gradient of total_loss on one
/// sample, for parameters sampled evenly across the model's modules. BN
/// running statistics are restored afterwards.
GradCheckReport grad_check(DepthModel& model, const Frame& frame, const SparseDepth& sparse,
                           const LossWeights& lw, const GradCheckOptions& opt = {});

struct TrainedPair {
  DepthModel partial_conv;
  DepthModel interpolation;
  TrainLog partial_conv_log;
  TrainLog interpolation_log;
};

/// Trains the partial-conv model and the interpolation baseline from the same
/// seeds and schedule; only the encoder kind differs.
TrainedPair train_pair(const ModelConfig& model_cfg, std::uint64_t model_seed,
                       const std::vector<TrainFrame>& frames, const TrainConfig& cfg,
                       const LossWeights& lw, std::ostream* progress = nullptr);

}  // namespace sparsefuse
