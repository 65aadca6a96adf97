#include <benchmark/benchmark.h>

#include <random>

#include "musreg/metrics.hpp"

namespace {

using namespace musreg;

Mask2D disc(int n, double cx, double cy, double radius) {
  Mask2D m(n, n, {0.2, 0.2});
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) m.at(c, r) = (c - cx) * (c - cx) + (r - cy) * (r - cy) <= radius * radius;
  }
  return m;
}

void BM_Hausdorff(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Mask2D a = disc(n, 0.5 * n, 0.5 * n, 0.35 * n);
  const Mask2D b = disc(n, 0.45 * n, 0.52 * n, 0.3 * n);
  for (auto _ : state) benchmark::DoNotOptimize(hausdorff(a, b));
  state.SetComplexityN(static_cast<std::int64_t>(n) * n);
}
BENCHMARK(BM_Hausdorff)->RangeMultiplier(2)->Range(64, 1024)->Complexity(benchmark::oN);

void BM_Dice(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Mask2D a = disc(n, 0.5 * n, 0.5 * n, 0.35 * n);
  const Mask2D b = disc(n, 0.45 * n, 0.52 * n, 0.3 * n);
  for (auto _ : state) benchmark::DoNotOptimize(dice(a, b));
}
BENCHMARK(BM_Dice)->Arg(256)->Arg(1024);

}  // namespace
