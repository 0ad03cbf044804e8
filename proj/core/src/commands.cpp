#include "sparsefuse/commands.hpp"

#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "sparsefuse/formats.hpp"
#include "sparsefuse/trainer.hpp"

namespace sparsefuse {

namespace {

void write_text(const std::string& path, const std::string& text) {
  write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

std::vector<TrainFrame> training_frames(const RunConfig& cfg) {
  const SceneSplit split = make_split(cfg.scenes.train_scenes, cfg.scenes.eval_scenes,
                                      cfg.scenes.seed, cfg.scenes.height, cfg.scenes.width);
  return make_train_frames(split.train, cfg.scenes.height, cfg.scenes.width, cfg.loss);
}

std::vector<Frame> eval_frames(const RunConfig& cfg) {
  const SceneSplit split = make_split(cfg.scenes.train_scenes, cfg.scenes.eval_scenes,
                                      cfg.scenes.seed, cfg.scenes.height, cfg.scenes.width);
  std::vector<Frame> out;
  for (std::uint64_t s : split.eval) out.push_back(render_seed(s, cfg.scenes.height, cfg.scenes.width));
  return out;
}

}  // namespace

void cmd_gen(const GenOptions& o, std::ostream& log) {
  if (o.scenes < 1) throw ConfigError("gen: --scenes must be at least 1");
  if (o.out_dir.empty()) throw ConfigError("gen: --out is required");
  const auto seeds = scene_seeds(o.seed, o.scenes, o.height, o.width, /*stream=*/2);
  std::vector<Frame> frames;
  for (std::uint64_t s : seeds) frames.push_back(render_seed(s, o.height, o.width));
  write_scene_dir(o.out_dir, frames, o.seed);
  log << "wrote " << frames.size() << " scenes to " << o.out_dir << '\n';
}

std::string train_log_path(const std::string& ckpt) { return ckpt + ".log.csv"; }
std::string config_snapshot_path(const std::string& ckpt) { return ckpt + ".config"; }

void cmd_train(const TrainOptions& o, std::ostream& log) {
  if (o.out_ckpt.empty()) throw ConfigError("train: --out is required");
  const RunConfig cfg = RunConfig::load(o.config_path);
  const auto frames = training_frames(cfg);
  DepthModel model(cfg.model, cfg.model_seed);
  const TrainLog tl = train(model, frames, cfg.train, cfg.loss, &log);
  save_checkpoint(o.out_ckpt, cfg, model);
  std::ostringstream csv;
  tl.write_csv(csv);
  write_text(train_log_path(o.out_ckpt), csv.str());
  write_text(config_snapshot_path(o.out_ckpt), cfg.snapshot());
  log << "checkpoint written to " << o.out_ckpt << '\n';
}

std::string model_label(const RunConfig& cfg) {
  return cfg.train.monocular ? "monocular" : to_string(cfg.model.encoder);
}

Predictor model_predictor(DepthModel& model) {
  return [&model](const Frame& f, const SparseDepth& s) {
    return model.forward(f.rgb, &s, /*training=*/false).depth;
  };
}

Predictor oracle_predictor() {
  return [](const Frame& f, const SparseDepth&) { return f.depth; };
}

void cmd_eval(const EvalOptions& o, std::ostream& log) {
  if (o.ckpts.empty() && !o.oracle) throw ConfigError("eval: at least one --ckpt (or --oracle) is required");
  if (o.out_csv.empty()) throw ConfigError("eval: --out is required");
  const std::vector<Frame> frames = read_scene_dir(o.scenes_dir);
  std::vector<Checkpoint> models;
  for (const auto& path : o.ckpts) models.push_back(load_checkpoint(path));
  const RunConfig defaults = models.empty() ? RunConfig{} : models.front().config;
  const InjectionRatio ratio(o.ratio.value_or(defaults.eval.ratio));
  const std::uint64_t mask_seed = o.mask_seed.value_or(defaults.eval.mask_seed);

  std::vector<MetricTable> tables;
  std::vector<std::string> labels;
  for (auto& ck : models) {
    if (ck.config.scenes.height != frames.front().depth.height() ||
        ck.config.scenes.width != frames.front().depth.width())
      throw DataError("eval: checkpoint resolution differs from the scene directory");
    std::string label = model_label(ck.config);
    for (int k = 2; std::find(labels.begin(), labels.end(), label) != labels.end(); ++k)
      label = model_label(ck.config) + "_" + std::to_string(k);
    labels.push_back(label);
    tables.push_back(stratified_eval(label, model_predictor(ck.model), frames, ratio, mask_seed));
  }
  if (o.oracle) tables.push_back(stratified_eval("oracle", oracle_predictor(), frames, ratio, mask_seed));
  const MetricTable table = combine(tables);
  std::ostringstream csv;
  write_stratified_csv(table, csv);
  write_text(o.out_csv, csv.str());
  if (!o.curve_csv.empty()) curve_export(table, o.curve_csv);
  log << "evaluated " << frames.size() << " scenes at ratio " << ratio.value() << " -> " << o.out_csv
      << '\n';
}

void cmd_ablate(const AblateOptions& o, std::ostream& log) {
  if (o.out_csv.empty()) throw ConfigError("ablate: --out is required");
  RunConfig cfg = RunConfig::load(o.config_path);
  if (cfg.train.monocular) throw ConfigError("ablate: the encoder ablation needs fusion (train.monocular = false)");
  const auto frames = training_frames(cfg);
  TrainedPair pair = train_pair(cfg.model, cfg.model_seed, frames, cfg.train, cfg.loss, &log);
  if (!o.ckpt_dir.empty()) {
    std::filesystem::create_directories(o.ckpt_dir);
    RunConfig pc = cfg;
    pc.model.encoder = EncoderKind::partial_conv;
    RunConfig ip = cfg;
    ip.model.encoder = EncoderKind::interpolation;
    save_checkpoint((std::filesystem::path(o.ckpt_dir) / "partialconv.ckpt").string(), pc,
                    pair.partial_conv);
    save_checkpoint((std::filesystem::path(o.ckpt_dir) / "interpolation.ckpt").string(), ip,
                    pair.interpolation);
  }
  const auto held_out = eval_frames(cfg);
  const AblationTable t = ablation_sweep(
      {{to_string(EncoderKind::partial_conv), model_predictor(pair.partial_conv)},
       {to_string(EncoderKind::interpolation), model_predictor(pair.interpolation)}},
      held_out, kAblationRatios, cfg.eval.mask_seed);
  std::ostringstream csv;
  write_ablation_csv(t, csv);
  write_text(o.out_csv, csv.str());
  log << "ablation written to " << o.out_csv << '\n';
}

std::string sibling_path(const std::string& out, const std::string& tag) {
  const std::filesystem::path p(out);
  std::filesystem::path r = p.parent_path() / p.stem();
  r += "." + tag;
  r += p.extension();
  return r.string();
}

void cmd_sparsify(const SparsifyOptions& o, std::ostream& log) {
  const InjectionRatio ratio(o.ratio);
  if (o.out_path.empty()) throw ConfigError("sparsify: --out is required");
  const Raster in = read_raster(o.depth_path);
  const DepthMap depth = depth_map_from(in);
  MaskMap allowed(depth.height(), depth.width(), 0);
  for (std::size_t i = 0; i < depth.size(); ++i)
    allowed[i] = std::isfinite(depth[i]) && depth[i] > 0.0;
  const MaskMap mask = sample_mask(depth.height(), depth.width(), ratio, o.seed, allowed);
  const SparseDepth s = sparsify(depth, mask);
  write_raster(o.out_path, to_raster(s.depth, in.dtype));
  write_raster(sibling_path(o.out_path, "mask"), to_raster(s.mask));
  if (o.densify) write_raster(sibling_path(o.out_path, "dense"), to_raster(bilinear_densify(s), in.dtype));
  log << "kept " << valid_count(s.mask) << " of " << depth.size() << " pixels\n";
}

}  // namespace sparsefuse
