// Reference vs. parallel kernels on the FSConv layer geometries at the
// desk-scale 64x64 input.

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "gleason/nn/kernels.hpp"

using namespace gleason::nn;

namespace {

std::vector<float> random_values(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(-1.f, 1.f);
  std::vector<float> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

// (in_channels, side, out_channels) for Conv_1..Conv_3 at a 64 input.
constexpr std::size_t kLayers[3][3] = {{3, 64, 32}, {32, 32, 124}, {124, 16, 512}};

struct ConvBuffers {
  ConvGeometry g;
  std::vector<float> x, w, b, y, dy, dx, dw, db;
  ConvBuffers(std::size_t layer, std::size_t batch) {
    const auto [c, side, f] = std::tuple{kLayers[layer][0], kLayers[layer][1], kLayers[layer][2]};
    g = conv_geometry(batch, c, side, side, f, 3, 3, 1, true);
    x = random_values(batch * c * side * side, 1);
    w = random_values(g.weight_size(), 2);
    b = random_values(f, 3);
    y.resize(batch * f * side * side);
    dy = random_values(y.size(), 4);
    dx.resize(x.size());
    dw.resize(w.size());
    db.resize(b.size());
  }
};

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  ConvBuffers buf(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  for (auto _ : state) {
    if constexpr (Parallel)
      parallel::conv2d_forward(buf.g, buf.x.data(), buf.w.data(), buf.b.data(), buf.y.data());
    else
      reference::conv2d_forward(buf.g, buf.x.data(), buf.w.data(), buf.b.data(), buf.y.data());
    benchmark::DoNotOptimize(buf.y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(buf.g.batch));
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& state) {
  ConvBuffers buf(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  for (auto _ : state) {
    if constexpr (Parallel)
      parallel::conv2d_backward(buf.g, buf.x.data(), buf.w.data(), buf.dy.data(), buf.dx.data(), buf.dw.data(),
                                buf.db.data());
    else
      reference::conv2d_backward(buf.g, buf.x.data(), buf.w.data(), buf.dy.data(), buf.dx.data(), buf.dw.data(),
                                 buf.db.data());
    benchmark::DoNotOptimize(buf.dw.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(buf.g.batch));
}

template <bool Parallel>
void BM_MaxPool(benchmark::State& state) {
  const auto g = pool_geometry(8, 124, 32, 32, 2, 2);
  auto x = random_values(8 * 124 * 32 * 32, 5);
  std::vector<float> y(8 * 124 * 16 * 16), dx(x.size());
  auto dy = random_values(y.size(), 6);
  for (auto _ : state) {
    if constexpr (Parallel) {
      parallel::max_pool_forward(g, x.data(), y.data());
      parallel::max_pool_backward(g, x.data(), dy.data(), dx.data());
    } else {
      reference::max_pool_forward(g, x.data(), y.data());
      reference::max_pool_backward(g, x.data(), dy.data(), dx.data());
    }
    benchmark::DoNotOptimize(dx.data());
  }
}

}  // namespace

BENCHMARK(BM_ConvForward<false>)->ArgsProduct({{0, 1, 2}, {4}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvForward<true>)->ArgsProduct({{0, 1, 2}, {4}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackward<false>)->ArgsProduct({{0, 1, 2}, {4}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackward<true>)->ArgsProduct({{0, 1, 2}, {4}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MaxPool<false>)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MaxPool<true>)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
