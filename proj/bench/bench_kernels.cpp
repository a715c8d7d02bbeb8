// Serial reference kernels against their OpenMP counterparts on the toy scene.

#include <benchmark/benchmark.h>

#include "splatmark/renderer.hpp"
#include "splatmark/scene.hpp"

namespace {

using namespace splatmark;

struct Fixture {
  ToyScene scene;
  SplatWeightCache cache;
  Image upstream;

  static const Fixture& get() {
    static const Fixture f = [] {
      Fixture x;
      x.scene = make_toy_scene(0, 2000, 1, 128, 0);
      x.cache = build_weight_cache(x.scene.asset, x.scene.views[0]);
      x.upstream = Image(128, 128, 3);
      for (size_t i = 0; i < x.upstream.data.size(); ++i) x.upstream.data[i] = 1e-3 * static_cast<double>(i % 17);
      return x;
    }();
    return f;
  }
};

void BM_CacheReference(benchmark::State& state) {
  const auto& f = Fixture::get();
  for (auto _ : state) benchmark::DoNotOptimize(build_weight_cache_reference(f.scene.asset, f.scene.views[0]));
}
void BM_CacheParallel(benchmark::State& state) {
  const auto& f = Fixture::get();
  for (auto _ : state) benchmark::DoNotOptimize(build_weight_cache(f.scene.asset, f.scene.views[0]));
}
void BM_RenderReference(benchmark::State& state) {
  const auto& f = Fixture::get();
  for (auto _ : state) benchmark::DoNotOptimize(render_reference(f.scene.asset.sh, f.cache));
}
void BM_RenderParallel(benchmark::State& state) {
  const auto& f = Fixture::get();
  for (auto _ : state) benchmark::DoNotOptimize(render(f.scene.asset.sh, f.cache));
}
void BM_GradientReference(benchmark::State& state) {
  const auto& f = Fixture::get();
  for (auto _ : state) benchmark::DoNotOptimize(render_gradient_reference(f.scene.asset.sh, f.cache, f.upstream));
}
void BM_GradientParallel(benchmark::State& state) {
  const auto& f = Fixture::get();
  for (auto _ : state) benchmark::DoNotOptimize(render_gradient(f.scene.asset.sh, f.cache, f.upstream));
}

BENCHMARK(BM_CacheReference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CacheParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RenderReference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RenderParallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GradientReference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GradientParallel)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
