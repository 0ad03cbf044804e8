#pragma once

// Pipeline commands behind the command-line tool. Each is deterministic in
// its options; diagnostics go to `log`.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sparsefuse/config.hpp"
#include "sparsefuse/evaluator.hpp"

namespace sparsefuse {

struct GenOptions {
  std::size_t scenes = 0;
  std::uint64_t seed = 0;
  std::string out_dir;
  int height = 64;
  int width = 128;
};

/// Renders held-out style scenes (the evaluation stream of `seed`) into a
/// scene directory.
void cmd_gen(const GenOptions& o, std::ostream& log);

struct TrainOptions {
  std::string config_path;
  std::string out_ckpt;
};

/// Paths written beside a checkpoint.
std::string train_log_path(const std::string& ckpt);
std::string config_snapshot_path(const std::string& ckpt);

/// Trains per the config; writes the checkpoint, its TrainLog CSV and the
/// resolved-config snapshot.
void cmd_train(const TrainOptions& o, std::ostream& log);

struct EvalOptions {
  std::vector<std::string> ckpts;
  std::string scenes_dir;
  std::optional<Real> ratio;            ///< defaults to the first checkpoint's eval.ratio (or 0.005)
  std::optional<std::uint64_t> mask_seed;
  std::string out_csv;
  std::string curve_csv;                ///< optional AbsRel-vs-distance export
  bool oracle = false;                  ///< add a pred := gt row set (debugging)
};

/// Label under which a checkpoint's rows appear.
std::string model_label(const RunConfig& cfg);

void cmd_eval(const EvalOptions& o, std::ostream& log);

struct AblateOptions {
  std::string config_path;
  std::string out_csv;
  std::string ckpt_dir;  ///< optional: keep the paired checkpoints here
};

void cmd_ablate(const AblateOptions& o, std::ostream& log);

struct SparsifyOptions {
  std::string depth_path;
  Real ratio = 0;
  std::uint64_t seed = 0;
  std::string out_path;
  bool densify = false;
};

/// `out` with `tag` inserted before the extension: a.slr -> a.<tag>.slr.
std::string sibling_path(const std::string& out, const std::string& tag);

void cmd_sparsify(const SparsifyOptions& o, std::ostream& log);

/// Predictor backed by a model (evaluation mode).
Predictor model_predictor(DepthModel& model);
/// pred := gt.
Predictor oracle_predictor();

}  // namespace sparsefuse
