// Copyright 2026 The rmmb Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "rmmb/matrix.hpp"
#include "rmmb/rng.hpp"

namespace {

rmmb::Matrix filled(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  rmmb::Rng rng(seed);
  rmmb::Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = filled(n, n, 1);
  const auto b = filled(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(rmmb::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * 2 * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(16, 256);

// aᵀb, the shape of a weight gradient: batch rows contracted away.
void BM_MatmulTn(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const auto x = filled(batch, 256, 3);
  const auto dy = filled(batch, 256, 4);
  for (auto _ : state) benchmark::DoNotOptimize(rmmb::matmul_tn(dy, x));
}
BENCHMARK(BM_MatmulTn)->RangeMultiplier(2)->Range(16, 256);

}  // namespace

BENCHMARK_MAIN();
