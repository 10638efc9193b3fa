// Copyright 2026 The rmmb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>

#include "rmmb/matrix.hpp"
#include "rmmb/sketch.hpp"

namespace rmmb {

// Variance of the weight gradient XᵀY of a linear layer, where X (B x N) is
// the layer input and Y (B x M) the gradient arriving at its output.
//
// Sampling noise. Treat the batch gradient as the mean of B per-example
// terms Z_k = B x_k y_kᵀ (x_k, y_k the k-th rows). The unbiased sample
// variance of that mean is
//
//   D²_SGD = B/(B-1) Σ_k ‖x_k‖²‖y_k‖² − ‖XᵀY‖²_F / (B-1).
//
// Sketch noise. For S with E[S Sᵀ] = I and B_proj columns,
//
//   D²_RMM = (‖X‖²_F ‖Y‖²_F − ‖XᵀY‖²_F) / B_proj
//
// is the closed form the variance-ratio bound is stated in. Note that for
// Gaussian S the true second moment E‖XᵀSSᵀY − XᵀY‖²_F has +‖XᵀY‖²_F
// instead; see exact_sketch_variance. The two agree when XᵀY = 0.

// Throws DomainError when B < 2, ShapeError when row counts differ.
double d_sgd_sq(const Matrix& x, const Matrix& y);
// Throws DomainError when b_proj < 1.
double d_rmm_sq(const Matrix& x, const Matrix& y, std::size_t b_proj);
// ‖XᵀY‖² / (‖X‖²‖Y‖²) in [0, 1]; DomainError if X or Y is zero.
double alpha(const Matrix& x, const Matrix& y);

// E_S ‖XᵀSSᵀY − XᵀY‖²_F from the fourth moments of the sketch entries:
//   Gaussian:   (‖X‖²‖Y‖² + ‖XᵀY‖²) / B_proj
//   Rademacher: (‖X‖²‖Y‖² + ‖XᵀY‖² − 2 Σ_k ‖x_k‖²‖y_k‖²) / B_proj
double exact_sketch_variance(const Matrix& x, const Matrix& y, std::size_t b_proj,
                             Distribution distribution);

struct VarianceReport {
  double d_sgd_sq = 0.0;
  std::optional<double> d_rmm_sq;   // absent for exact-mode layers
  std::optional<double> alpha;      // absent when X or Y is zero
  std::optional<double> lhs;        // B_proj/(B-1) · D²_RMM / D²_SGD
  std::optional<double> bound;      // (α + 1) / α
  std::size_t batch = 0;
  std::optional<std::size_t> proj;
  std::int64_t layer_id = 0;
  std::int64_t step = 0;
  // lhs and bound are only meaningful when α > 0 and D²_SGD > 0.
  bool applicable = false;
  bool violation = false;
};

// Full report including the bound check. Degenerate inputs (α = 0, zero X
// or Y, D²_SGD = 0) give applicable = false rather than an exception.
VarianceReport check_bound(const Matrix& x, const Matrix& y, std::size_t b_proj,
                           std::int64_t layer_id = 0, std::int64_t step = 0);
// Sampling-noise-only report for layers that do not sketch.
VarianceReport sgd_report(const Matrix& x, const Matrix& y, std::int64_t layer_id = 0,
                          std::int64_t step = 0);

struct MonteCarloEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
};

// Sample mean of ‖XᵀSSᵀY − XᵀY‖²_F over n_samples sketches drawn from
// `spec` at B = x.rows(). Sample i uses seed derive_seed(seed, 0, i), so the
// result does not depend on evaluation order.
MonteCarloEstimate empirical_rmm_variance(const Matrix& x, const Matrix& y, const SketchSpec& spec,
                                          std::size_t n_samples, std::uint64_t seed);

}  // namespace rmmb
