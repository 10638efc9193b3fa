// Copyright 2026 The rmmb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>

#include "rmmb/matrix.hpp"
#include "rmmb/rng.hpp"

namespace rmmb::testing {

inline Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = scale * rng.normal();
  return m;
}

inline double rel_err(double observed, double expected) {
  return std::abs(observed - expected) / std::abs(expected);
}

}  // namespace rmmb::testing
