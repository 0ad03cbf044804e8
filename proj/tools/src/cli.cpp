#include "cli.hpp"

#include <CLI11.hpp>
#include <ostream>

#include "sparsefuse/commands.hpp"
#include "sparsefuse/errors.hpp"

namespace sparsefuse {

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sparse depth injection for metric depth estimation"};
  app.require_subcommand(1);

  GenOptions gen;
  auto* g = app.add_subcommand("gen", "Render a directory of evaluation scenes");
  g->add_option("--scenes", gen.scenes, "Number of scenes")->required();
  g->add_option("--seed", gen.seed, "Scene seed")->required();
  g->add_option("--out", gen.out_dir, "Output directory")->required();
  g->add_option("--height", gen.height, "Frame height (multiple of 16)");
  g->add_option("--width", gen.width, "Frame width (multiple of 16)");

  TrainOptions tr;
  auto* t = app.add_subcommand("train", "Train a model from a config file");
  t->add_option("--config", tr.config_path, "key = value config")->required();
  t->add_option("--out", tr.out_ckpt, "Checkpoint path")->required();

  EvalOptions ev;
  Real ratio = 0;
  std::uint64_t mask_seed = 0;
  auto* e = app.add_subcommand("eval", "Distance-stratified evaluation");
  e->add_option("--ckpt", ev.ckpts, "Checkpoint(s); repeat to compare models");
  e->add_option("--scenes", ev.scenes_dir, "Scene directory from gen")->required();
  auto* ratio_opt = e->add_option("--ratio", ratio, "Injection ratio");
  auto* seed_opt = e->add_option("--mask-seed", mask_seed, "Injection mask seed");
  e->add_option("--out", ev.out_csv, "Stratified CSV")->required();
  e->add_option("--curve", ev.curve_csv, "AbsRel-vs-distance CSV");
  e->add_flag("--oracle", ev.oracle, "Also evaluate a pred := gt predictor");

  AblateOptions ab;
  auto* a = app.add_subcommand("ablate", "Train both encoders and sweep six ratios");
  a->add_option("--config", ab.config_path, "key = value config")->required();
  a->add_option("--out", ab.out_csv, "Ablation CSV")->required();
  a->add_option("--ckpt-dir", ab.ckpt_dir, "Keep the paired checkpoints here");

  SparsifyOptions sp;
  auto* s = app.add_subcommand("sparsify", "Sample a sparse injection from a depth raster");
  s->add_option("--depth", sp.depth_path, "Depth raster")->required();
  s->add_option("--ratio", sp.ratio, "Injection ratio in (0, 1]")->required();
  s->add_option("--seed", sp.seed, "Mask seed")->required();
  s->add_option("--out", sp.out_path, "Sparse depth raster")->required();
  s->add_flag("--densify", sp.densify, "Also write the pre-interpolated dense map");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << '\n' << app.help();
    return kExitUsage;
  }

  try {
    if (*g) cmd_gen(gen, err);
    if (*t) cmd_train(tr, err);
    if (*e) {
      if (*ratio_opt) ev.ratio = ratio;
      if (*seed_opt) ev.mask_seed = mask_seed;
      cmd_eval(ev, err);
    }
    if (*a) cmd_ablate(ab, err);
    if (*s) cmd_sparsify(sp, err);
  } catch (const NumericAbort& ex) {
    err << "numeric abort: " << ex.what() << '\n';
    return kExitNumeric;
  } catch (const DataError& ex) {
    err << "data error: " << ex.what() << '\n';
    return kExitData;
  } catch (const DegenerateInputError& ex) {
    err << "data error: " << ex.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& ex) {
    err << "usage error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& ex) {
    err << "internal error: " << ex.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}

}  // namespace sparsefuse
