#include <benchmark/benchmark.h>

#include "sparsefuse/model.hpp"
#include "sparsefuse/partial_encoder.hpp"
#include "sparsefuse/scene.hpp"
#include "sparsefuse/sparsifier.hpp"

using namespace sparsefuse;

namespace {

FeatureMap random_map(int c, int h, int w, Rng& rng) {
  FeatureMap m(c, h, w);
  for (Real& v : m.data()) v = rng.uniform(-1, 1);
  return m;
}

ConvParams random_conv(int in, int out, Rng& rng) {
  ConvParams p = ConvParams::zeros(in, out, 3);
  for (Real& v : p.weight) v = rng.uniform(-0.1, 0.1);
  return p;
}

void BM_Conv2d(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  Rng rng(1);
  const FeatureMap x = random_map(c, 32, 64, rng);
  const ConvParams p = random_conv(c, c, rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, p));
}
BENCHMARK(BM_Conv2d)->Arg(4)->Arg(16)->Arg(32);

void BM_PartialConv2d(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  Rng rng(2);
  MaskedFeature x{random_map(c, 32, 64, rng), MaskMap(32, 64)};
  for (auto& b : x.mask.data()) b = rng.uniform() < 0.1 ? 1 : 0;
  const ConvParams p = random_conv(c, c, rng);
  for (auto _ : state) benchmark::DoNotOptimize(partial_conv2d(x, p));
}
BENCHMARK(BM_PartialConv2d)->Arg(4)->Arg(16)->Arg(32);

void BM_ModelForward(benchmark::State& state) {
  const Frame f = render_seed(7, 64, 128);
  const SparseDepth s = sparsify(f.depth, sample_mask(64, 128, InjectionRatio(0.005), 3));
  DepthModel model(ModelConfig{}, 1);
  model.set_fusion_enabled(true);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(f.rgb, &s, false));
}
BENCHMARK(BM_ModelForward)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
