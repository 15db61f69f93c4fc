#include <benchmark/benchmark.h>

#include <random>

#include "deepstreet/completion.hpp"
#include "deepstreet/kernels.hpp"
#include "deepstreet/mask.hpp"
#include "deepstreet/network.hpp"
#include "deepstreet/raster.hpp"
#include "deepstreet/synthetic.hpp"
#include "deepstreet/training.hpp"

namespace deepstreet {
namespace {

Tensor random_tensor(const Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  Tensor t(shape);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

// Args: channels in and out, spatial size, dilation.
void BM_Conv2d(benchmark::State& state) {
  const int ch = static_cast<int>(state.range(0));
  const int size = static_cast<int>(state.range(1));
  const int dilation = static_cast<int>(state.range(2));
  const Tensor in = random_tensor({1, ch, size, size}, 1);
  const Tensor k = random_tensor({ch, ch, 3, 3}, 2);
  const kernels::ConvGeometry g{1, dilation, dilation};
  for (auto _ : state) benchmark::DoNotOptimize(kernels::conv2d(in, k, nullptr, g));
  state.SetItemsProcessed(state.iterations() * 2LL * ch * ch * 9 * size * size);
}
BENCHMARK(BM_Conv2d)->Args({32, 64, 1})->Args({32, 64, 4})->Args({8, 256, 1})->Unit(benchmark::kMillisecond);

// Full completion of one tile; Arg is the tile size, scale 1/8.
void BM_Complete(benchmark::State& state) {
  const int tile_px = static_cast<int>(state.range(0));
  const MaskGeometry geometry = tile_px == 64 ? MaskGeometry::desk() : MaskGeometry{};
  const Model model = build_model(NetworkConfig::for_geometry(geometry, 0.125));
  const Tile tile = gridiron_tiles(1, tile_px, 3)[0];
  const Mask mask = random_mask(std::uint64_t{4}, geometry);
  for (auto _ : state) benchmark::DoNotOptimize(complete(model, tile, mask));
}
BENCHMARK(BM_Complete)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

// One phase-1 update on the desk configuration, batch 8.
void BM_GeneratorStep(benchmark::State& state) {
  TrainConfig config;
  config.geometry = MaskGeometry::desk();
  config.batch_size = 8;
  Trainer trainer(build_model(NetworkConfig::for_geometry(config.geometry, 0.125)), gridiron_tiles(8, 64, 5), config);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.generator_step());
}
BENCHMARK(BM_GeneratorStep)->Unit(benchmark::kMillisecond);

void BM_StrokeRoads(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const SyntheticCity city = synthetic_city(size, size, 6);
  for (auto _ : state) {
    CityRaster raster(city.raster.geometry);
    benchmark::DoNotOptimize(stroke_roads(city.roads, raster));
  }
}
BENCHMARK(BM_StrokeRoads)->Arg(512)->Arg(1024)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace deepstreet

BENCHMARK_MAIN();
