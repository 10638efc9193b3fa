// Copyright 2026 The rmmb Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <optional>

#include "rmmb/linear.hpp"
#include "rmmb/rng.hpp"

namespace {

using rmmb::Matrix;

Matrix filled(std::size_t rows, std::size_t cols, rmmb::Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

// Forward plus backward through one 256 -> 256 layer at B = 256.
// Arg 0 is rho in percent; 0 means the exact layer.
void BM_LinearStep(benchmark::State& state) {
  const std::size_t batch = 256, n = 256;
  rmmb::Rng rng(5);
  const Matrix x = filled(batch, n, rng);
  const Matrix dy = filled(batch, n, rng);
  Matrix w = filled(n, n, rng);
  std::vector<double> b(n, 0.0);
  std::optional<rmmb::SketchSpec> spec;
  if (state.range(0) > 0) {
    spec.emplace();
    spec->rho = static_cast<double>(state.range(0)) / 100.0;
    spec->master_seed = 6;
  }
  const auto layer = spec ? rmmb::LinearLayer::randomized(w, b, *spec) : rmmb::LinearLayer::exact(w, b);
  std::int64_t step = 0;
  for (auto _ : state) {
    auto f = rmmb::forward(layer, x, step++);
    benchmark::DoNotOptimize(rmmb::backward(layer, f.context, dy));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_LinearStep)->Arg(0)->Arg(5)->Arg(10)->Arg(25)->Arg(50)->Arg(100);

}  // namespace

BENCHMARK_MAIN();
