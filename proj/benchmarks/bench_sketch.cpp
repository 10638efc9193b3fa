// Copyright 2026 The rmmb Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "rmmb/sketch.hpp"

namespace {

template <rmmb::Distribution D>
void BM_SampleSketch(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  rmmb::SketchHandle h{1, batch, batch / 4, D};
  for (auto _ : state) {
    ++h.seed;
    benchmark::DoNotOptimize(rmmb::sample_sketch(h));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch * (batch / 4)));
}
BENCHMARK(BM_SampleSketch<rmmb::Distribution::Gaussian>)->RangeMultiplier(2)->Range(16, 512);
BENCHMARK(BM_SampleSketch<rmmb::Distribution::Rademacher>)->RangeMultiplier(2)->Range(16, 512);

}  // namespace

BENCHMARK_MAIN();
