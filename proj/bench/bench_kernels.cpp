#include <benchmark/benchmark.h>

#include "fresco/attention.hpp"
#include "fresco/featopt.hpp"
#include "fresco/flowfield.hpp"
#include "fresco/parallel.hpp"
#include "fresco/rng.hpp"

using namespace fresco;

namespace {

Grid noise(std::uint64_t seed, int h, int w, int c) {
  Grid g(h, w, c);
  NormalSource(seed).fill_normal(g);
  return g;
}

FlowField wobble(int h, int w) {
  FlowField f(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) f.set(y, x, 2.5 * std::sin(0.1 * y), 1.5 * std::cos(0.07 * x));
  return f;
}

// Arg(0) runs the serial reference; Arg(n > 0) runs the OpenMP kernel on n threads.
void threads_arg(benchmark::internal::Benchmark* b) {
  b->Arg(0);
  for (int t = 1; t <= max_threads(); t *= 2) b->Arg(t);
  b->Unit(benchmark::kMillisecond);
}

void BM_BackwardWarp(benchmark::State& state) {
  const Grid src = noise(1, 256, 256, 16);
  const FlowField f = wobble(256, 256);
  if (state.range(0) > 0) set_threads(static_cast<int>(state.range(0)));
  for (auto _ : state)
    benchmark::DoNotOptimize(state.range(0) ? flow::backward_warp(src, f) : flow::reference::backward_warp(src, f));
}
BENCHMARK(BM_BackwardWarp)->Apply(threads_arg);

void BM_BlockMatching(benchmark::State& state) {
  const Grid a = noise(2, 64, 64, 3), b = noise(3, 64, 64, 3);
  if (state.range(0) > 0) set_threads(static_cast<int>(state.range(0)));
  for (auto _ : state)
    benchmark::DoNotOptimize(state.range(0) ? flow::estimate_flow_block_matching(a, b)
                                            : flow::reference::estimate_flow_block_matching(a, b));
}
BENCHMARK(BM_BlockMatching)->Apply(threads_arg);

void BM_Attention(benchmark::State& state) {
  const Grid q = noise(4, 32, 32, 64), k = noise(5, 32, 96, 64), v = noise(6, 32, 96, 64);
  if (state.range(0) > 0) set_threads(static_cast<int>(state.range(0)));
  for (auto _ : state)
    benchmark::DoNotOptimize(state.range(0) ? attn::scaled_softmax_attention(q, k, v, 1.0)
                                            : attn::reference::scaled_softmax_attention(q, k, v, 1.0));
}
BENCHMARK(BM_Attention)->Apply(threads_arg);

void BM_SpatialLoss(benchmark::State& state) {
  const Grid f = noise(7, 24, 24, 32), r = noise(8, 24, 24, 32);
  featopt::FeatureBatch batch{{f}, {}, {}};
  featopt::OptimConfig cfg;
  if (state.range(0) > 0) set_threads(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    if (state.range(0)) {
      benchmark::DoNotOptimize(featopt::loss_and_grad(batch, {r}, cfg));
    } else {
      Grid g;
      benchmark::DoNotOptimize(featopt::reference::spatial_loss_and_grad(f, r, cfg.lambda_spat, &g));
    }
  }
}
BENCHMARK(BM_SpatialLoss)->Apply(threads_arg);

}  // namespace

BENCHMARK_MAIN();
