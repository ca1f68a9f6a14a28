// Parallel kernels against their serial reference implementations.
// Parallel variants take the thread cap as the benchmark argument.

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>
#include <thread>

#include "dpfence/conv.hpp"
#include "dpfence/costvol.hpp"
#include "dpfence/defence.hpp"
#include "dpfence/parallel.hpp"
#include "dpfence/psf.hpp"

using namespace dpfence;

namespace {

Image noise_image(int w, int h, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Image img(w, h, c);
  for (auto& v : img.data()) v = u(rng);
  return img;
}

MaskImage disc(int w, int h, double r) {
  MaskImage m(w, h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m.at(y, x) = std::hypot(x - w / 2.0, y - h / 2.0) <= r ? 1.0f : 0.0f;
  return m;
}

void thread_args(benchmark::internal::Benchmark* b) {
  const int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  b->Arg(1);
  if (hw > 1) b->Arg(hw);
  b->UseRealTime()->Unit(benchmark::kMillisecond);
}

// ----- spatially varying convolution, 512x512 RGB, alpha 4

void BM_PatchwiseConv(benchmark::State& state) {
  set_thread_count(static_cast<int>(state.range(0)));
  const Image img = noise_image(512, 512, 3, 1);
  const DPGrids g = make_parametric_grids(4.0, 6, 8);
  for (auto _ : state) benchmark::DoNotOptimize(patchwise_conv(img, g.left));
  set_thread_count(0);
}
BENCHMARK(BM_PatchwiseConv)->Apply(thread_args);

void BM_PatchwiseConvReference(benchmark::State& state) {
  const Image img = noise_image(512, 512, 3, 1);
  const DPGrids g = make_parametric_grids(4.0, 6, 8);
  for (auto _ : state) benchmark::DoNotOptimize(reference::patchwise_conv(img, g.left));
}
BENCHMARK(BM_PatchwiseConvReference)->UseRealTime()->Unit(benchmark::kMillisecond);

// ----- cost volume, 128x128 input (64x64 features), dmax 8 step 0.25

struct Features {
  FeatureMap left;
  FeatureMap right;
};

Features features(int size) {
  const Image l = noise_image(size, size, 1, 2);
  const Image r = noise_image(size, size, 1, 3);
  return {extract_features(l), extract_features(r)};
}

void BM_CostVolume(benchmark::State& state) {
  set_thread_count(static_cast<int>(state.range(0)));
  const Features f = features(128);
  for (auto _ : state) benchmark::DoNotOptimize(build_cost_volume(f.left, f.right, 8.0, 0.25));
  set_thread_count(0);
}
BENCHMARK(BM_CostVolume)->Apply(thread_args);

void BM_CostVolumeReference(benchmark::State& state) {
  const Features f = features(128);
  for (auto _ : state) benchmark::DoNotOptimize(reference::build_cost_volume(f.left, f.right, 8.0, 0.25));
}
BENCHMARK(BM_CostVolumeReference)->UseRealTime()->Unit(benchmark::kMillisecond);

// ----- 7x7x7 aggregation over a 256x256 input's volume

void BM_Aggregate(benchmark::State& state) {
  set_thread_count(static_cast<int>(state.range(0)));
  const Features f = features(256);
  const CostVolume vol = build_cost_volume(f.left, f.right, 8.0, 0.25);
  for (auto _ : state) benchmark::DoNotOptimize(aggregate_cost(vol, 7));
  set_thread_count(0);
}
BENCHMARK(BM_Aggregate)->Apply(thread_args);

void BM_AggregateReference(benchmark::State& state) {
  const Features f = features(256);
  const CostVolume vol = build_cost_volume(f.left, f.right, 8.0, 0.25);
  for (auto _ : state) benchmark::DoNotOptimize(reference::aggregate_cost(vol, 7));
}
BENCHMARK(BM_AggregateReference)->UseRealTime()->Unit(benchmark::kMillisecond);

// ----- harmonic fill of a radius-40 disc in a 256x256 RGB image

void BM_Inpaint(benchmark::State& state) {
  set_thread_count(static_cast<int>(state.range(0)));
  const Image img = noise_image(256, 256, 3, 4);
  const MaskImage mask = disc(256, 256, 40);
  for (auto _ : state) benchmark::DoNotOptimize(inpaint(img, mask));
  set_thread_count(0);
}
BENCHMARK(BM_Inpaint)->Apply(thread_args);

void BM_InpaintReference(benchmark::State& state) {
  const Image img = noise_image(256, 256, 3, 4);
  const MaskImage mask = disc(256, 256, 40);
  for (auto _ : state) benchmark::DoNotOptimize(reference::inpaint(img, mask));
}
BENCHMARK(BM_InpaintReference)->UseRealTime()->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
