#include <benchmark/benchmark.h>

#include <random>

#include "schn/degradation.hpp"
#include "schn/metrics.hpp"
#include "schn/network.hpp"
#include "schn/ops.hpp"

using namespace schn;

namespace {

Tensor<float> uniform(Shape shape, unsigned seed, float lo = -1.0f, float hi = 1.0f, bool grad = false) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> dist(lo, hi);
  std::size_t n = 1;
  for (auto d : shape) n *= static_cast<std::size_t>(d);
  std::vector<float> values(n);
  for (auto& v : values) v = dist(rng);
  return Tensor<float>::from_vector(std::move(shape), std::move(values), grad);
}

ImageBuffer image(int h, int w, unsigned seed) {
  ImageBuffer img(h, w);
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  for (auto& v : img.values) v = dist(rng);
  return img;
}

void BM_Conv2d(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), s = static_cast<int>(state.range(1));
  const auto x = uniform({1, c, s, s}, 1);
  const auto w = uniform({c, c, 3, 3}, 2, -0.1f, 0.1f);
  const auto b = uniform({c}, 3);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, b));
  state.SetItemsProcessed(state.iterations() * 2LL * c * c * 9 * s * s);
}
BENCHMARK(BM_Conv2d)->Args({32, 32})->Args({64, 48})->Unit(benchmark::kMillisecond);

void BM_GridSample(benchmark::State& state) {
  const int c = 64, s = static_cast<int>(state.range(0));
  auto feat = uniform({1, c, s, s}, 4, 0.0f, 1.0f, true);
  auto off = uniform({1, 2, s, s}, 5, -3.0f, 3.0f, true);
  for (auto _ : state) {
    feat.zero_grad();
    off.zero_grad();
    auto y = grid_sample_offsets(feat, off);
    auto loss = sum(y);
    loss.backward();
    benchmark::DoNotOptimize(feat.grad().data());
  }
}
BENCHMARK(BM_GridSample)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_SchnForward(benchmark::State& state) {
  const auto model = SchnModel<float>::initialized(SCHConfig::reference(4), 1);
  const int s = static_cast<int>(state.range(0));
  const auto lr = uniform({1, 3, s, s}, 6, 0.0f, 1.0f);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(schn_forward(lr, model, ForwardOptions{false}));
}
BENCHMARK(BM_SchnForward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_BicubicDown(benchmark::State& state) {
  const auto hr = image(512, 512, 7);
  for (auto _ : state) benchmark::DoNotOptimize(bicubic_resize(hr, {1, 4}));
}
BENCHMARK(BM_BicubicDown)->Unit(benchmark::kMillisecond);

void BM_Ssim(benchmark::State& state) {
  const auto a = image(256, 256, 8), b = image(256, 256, 9);
  for (auto _ : state) benchmark::DoNotOptimize(ssim_rgb(a, b));
}
BENCHMARK(BM_Ssim)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
