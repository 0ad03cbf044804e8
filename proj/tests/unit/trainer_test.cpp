#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "sparsefuse/evaluator.hpp"
#include "sparsefuse/trainer.hpp"

using namespace sparsefuse;

namespace {

std::vector<TrainFrame> toy_frames(std::size_t n, int h = 32, int w = 64) {
  const SceneSplit split = make_split(n, 1, 21, h, w);
  return make_train_frames(split.train, h, w, LossWeights{});
}

std::vector<std::vector<Real>> snapshot(DepthModel& m) {
  std::vector<std::vector<Real>> out;
  for (const auto& p : m.parameters().params) out.emplace_back(p.value.begin(), p.value.end());
  return out;
}

TrainConfig short_config(int steps) {
  TrainConfig cfg;
  cfg.steps = steps;
  cfg.pretrain_steps = steps / 2;
  cfg.batch_size = 2;
  return cfg;
}

}  // namespace

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.steps = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.pretrain_steps = cfg.steps + 1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.ratio_min = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.beta2 = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<Real> v{1.0, -2.0, 3.0}, g{0.5, -4.0, 0.0};
  ParamSet set;
  set.add("w", v, g);
  Adam opt(0.1, 0.9, 0.999, 1e-8);
  opt.step(set);
  // Bias-corrected first step: -lr * g / (|g| + eps).
  EXPECT_NEAR(v[0], 1.0 - 0.1 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(v[1], -2.0 + 0.1 * 4.0 / (4.0 + 1e-8), 1e-15);
  EXPECT_EQ(v[2], 3.0);
  EXPECT_EQ(opt.steps_taken(), 1);
  opt.reset();
  EXPECT_EQ(opt.steps_taken(), 0);
}

TEST(Adam, SecondStepMatchesRecurrence) {
  std::vector<Real> v{0.0}, g{1.0};
  ParamSet set;
  set.add("w", v, g);
  const Real lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Adam opt(lr, b1, b2, eps);
  opt.step(set);
  g[0] = -3.0;
  opt.step(set);
  Real m = (1 - b1) * 1.0, s = (1 - b2) * 1.0, x = -lr * (m / (1 - b1)) / (std::sqrt(s / (1 - b2)) + eps);
  m = b1 * m + (1 - b1) * -3.0;
  s = b2 * s + (1 - b2) * 9.0;
  x -= lr * (m / (1 - b1 * b1)) / (std::sqrt(s / (1 - b2 * b2)) + eps);
  EXPECT_NEAR(v[0], x, 1e-15);
}

TEST(Batching, EpochsArePermutations) {
  TrainConfig cfg;
  cfg.batch_size = 3;
  std::multiset<std::size_t> seen;
  // 4 steps x 3 = 12 = two epochs of 6 frames.
  for (int step = 0; step < 4; ++step)
    for (std::size_t i : batch_indices(6, cfg, step)) seen.insert(i);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(seen.count(i), 2u);
}

TEST(Batching, StepRatiosInRangeAndSeeded) {
  TrainConfig cfg;
  for (int s = 0; s < 100; ++s) {
    const Real r = step_ratio(cfg, s).value();
    EXPECT_GE(r, cfg.ratio_min);
    EXPECT_LE(r, cfg.ratio_max);
    EXPECT_EQ(r, step_ratio(cfg, s).value());
  }
  TrainConfig other = cfg;
  other.seed = cfg.seed + 1;
  EXPECT_NE(step_ratio(cfg, 0).value(), step_ratio(other, 0).value());
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  const auto frames = toy_frames(2);
  DepthModel m(ModelConfig{}, 3);
  const auto before = snapshot(m);
  TrainConfig cfg = short_config(4);
  cfg.learning_rate = 0.0;
  train(m, frames, cfg, LossWeights{});
  EXPECT_EQ(snapshot(m), before);
}

TEST(Train, IdenticalSeedsGiveIdenticalLogs) {
  const auto frames = toy_frames(3);
  const TrainConfig cfg = short_config(6);
  DepthModel a(ModelConfig{}, 4), b(ModelConfig{}, 4);
  const TrainLog la = train(a, frames, cfg, LossWeights{});
  const TrainLog lb = train(b, frames, cfg, LossWeights{});
  ASSERT_EQ(la.records.size(), 6u);
  std::ostringstream sa, sb;
  la.write_csv(sa);
  lb.write_csv(sb);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(snapshot(a), snapshot(b));
}

TEST(Train, FusionSwitchesOnAfterPretraining) {
  const auto frames = toy_frames(2);
  DepthModel m(ModelConfig{}, 5);
  TrainConfig cfg = short_config(2);
  cfg.pretrain_steps = 2;
  train(m, frames, cfg, LossWeights{});
  EXPECT_FALSE(m.fusion_enabled());
  cfg.monocular = false;
  cfg.pretrain_steps = 1;
  train(m, frames, cfg, LossWeights{});
  EXPECT_TRUE(m.fusion_enabled());
}

TEST(Train, MonocularLeavesSparseBranchUntouched) {
  const auto frames = toy_frames(2);
  DepthModel m(ModelConfig{}, 6);
  ParamSet before_set = m.parameters();
  std::vector<std::vector<Real>> enc_before;
  for (const auto& p : before_set.params)
    if (p.name.rfind("encoder.", 0) == 0 || p.name.rfind("neck.", 0) == 0)
      enc_before.emplace_back(p.value.begin(), p.value.end());
  TrainConfig cfg = short_config(3);
  cfg.monocular = true;
  train(m, frames, cfg, LossWeights{});
  std::size_t k = 0;
  for (const auto& p : m.parameters().params)
    if (p.name.rfind("encoder.", 0) == 0 || p.name.rfind("neck.", 0) == 0)
      EXPECT_EQ(std::vector<Real>(p.value.begin(), p.value.end()), enc_before[k++]) << p.name;
}

TEST(Train, LossDecreasesOnSmallSet) {
  const auto frames = toy_frames(8);
  DepthModel m(ModelConfig{}, 7);
  TrainConfig cfg = short_config(500);
  cfg.pretrain_steps = 100;
  const TrainLog log = train(m, frames, cfg, LossWeights{});
  ASSERT_EQ(log.records.size(), 500u);
  Real first = 0, last = 0;
  for (int i = 0; i < 50; ++i) {
    first += log.records[i].loss;
    last += log.records[450 + i].loss;
  }
  EXPECT_LT(last, first);
}

TEST(TrainStep, NonFiniteLossAborts) {
  auto frames = toy_frames(1);
  std::size_t i = 0;
  while (!frames[0].frame.validity[i]) ++i;
  frames[0].weights[i] = std::nan("");
  DepthModel m(ModelConfig{}, 8);
  Adam opt;
  const TrainFrame* batch[] = {&frames[0]};
  testing::internal::CaptureStderr();
  EXPECT_THROW(train_step(m, opt, batch, TrainConfig{}, LossWeights{}, 0), NumericAbort);
  EXPECT_NE(testing::internal::GetCapturedStderr().find("step 0"), std::string::npos);
}

TEST(TrainLog, CsvShape) {
  TrainLog log;
  log.records = {{0, 0.1, 2.5, 0.3}, {1, 0.2, 2.0, 0.25}};
  std::ostringstream os;
  log.write_csv(os);
  EXPECT_EQ(os.str(), "step,ratio,loss,grad_norm\n0,0.1,2.5,0.3\n1,0.2,2,0.25\n");
}

TEST(GradCheck, SmallModelPassesAndCoversModules) {
  const Frame f = render_seed(derive_seed(5, {1}), 32, 32);
  const SparseDepth s = eval_injection(f, InjectionRatio(0.05), 1);
  DepthModel m(ModelConfig{}, 9);
  GradCheckOptions opt;
  opt.samples = 50;
  const GradCheckReport r = grad_check(m, f, s, LossWeights{}, opt);
  EXPECT_GE(r.entries.size(), 45u);
  EXPECT_LE(r.max_rel_error, 1e-3) << r.worst;
  EXPECT_GT(r.base_loss_term, 0.0);
  EXPECT_GT(r.consistency_term, 0.0);
  std::set<std::string> modules;
  for (const auto& e : r.entries) modules.insert(e.name.substr(0, e.name.find('.')));
  EXPECT_EQ(modules, (std::set<std::string>{"backbone", "encoder", "neck", "decoder", "scale_head"}));
}

TEST(GradCheck, ZeroUpstreamGradientGivesZeroGradients) {
  const Frame f = render_seed(derive_seed(5, {2}), 32, 32);
  const SparseDepth s = eval_injection(f, InjectionRatio(0.05), 1);
  DepthModel m(ModelConfig{}, 10);
  ParamSet set = m.parameters();
  set.zero_grad();
  m.forward(f.rgb, &s, true);
  m.backward(DepthMap(32, 32, 0.0));
  for (const auto& p : set.params)
    for (Real g : p.grad) EXPECT_EQ(g, 0.0) << p.name;
}

TEST(GradCheck, RejectsLargeSamples) {
  const Frame f = render_seed(derive_seed(5, {3}), 32, 64);
  DepthModel m(ModelConfig{}, 11);
  EXPECT_THROW(grad_check(m, f, eval_injection(f, InjectionRatio(0.05), 1), LossWeights{}),
               PreconditionError);
}

TEST(TrainPair, SharedModulesMatchInSize) {
  const auto frames = toy_frames(2);
  TrainedPair p = train_pair(ModelConfig{}, 12, frames, short_config(2), LossWeights{});
  EXPECT_EQ(p.partial_conv.config().encoder, EncoderKind::partial_conv);
  EXPECT_EQ(p.interpolation.config().encoder, EncoderKind::interpolation);
  EXPECT_EQ(p.partial_conv_log.records.size(), 2u);
  EXPECT_EQ(p.partial_conv.parameters().parameter_count(),
            p.interpolation.parameters().parameter_count());
}
