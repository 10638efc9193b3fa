// Copyright 2026 The rmmb Authors
// SPDX-License-Identifier: Apache-2.0

#include "rmmb/variance.hpp"

#include <cmath>
#include <string>

#include "rmmb/error.hpp"

namespace rmmb {

namespace {

void require_paired(const Matrix& x, const Matrix& y, const char* op) {
  if (x.rows() != y.rows()) {
    throw ShapeError(std::string(op) + ": batch rows differ, X " + x.shape_string() + " vs Y " +
                     y.shape_string());
  }
}

// Σ_k ‖x_k‖² ‖y_k‖².
double per_example_sum(const Matrix& x, const Matrix& y) {
  const auto xn = row_norms_sq(x);
  const auto yn = row_norms_sq(y);
  double acc = 0.0;
  for (std::size_t k = 0; k < xn.size(); ++k) acc += xn[k] * yn[k];
  return acc;
}

// Relative slack for lhs <= bound under rounding.
constexpr double kBoundSlack = 1e-12;

}  // namespace

double d_sgd_sq(const Matrix& x, const Matrix& y) {
  require_paired(x, y, "d_sgd_sq");
  if (x.rows() < 2) throw DomainError("d_sgd_sq: batch size must be >= 2");
  const double b = static_cast<double>(x.rows());
  const double value =
      (b * per_example_sum(x, y) - frobenius_norm_sq(matmul_tn(x, y))) / (b - 1.0);
  // Nonnegative in exact arithmetic; clip cancellation noise.
  return value < 0.0 ? 0.0 : value;
}

double d_rmm_sq(const Matrix& x, const Matrix& y, std::size_t b_proj) {
  require_paired(x, y, "d_rmm_sq");
  if (b_proj < 1) throw DomainError("d_rmm_sq: b_proj must be >= 1");
  const double value = frobenius_norm_sq(x) * frobenius_norm_sq(y) -
                       frobenius_norm_sq(matmul_tn(x, y));
  return (value < 0.0 ? 0.0 : value) / static_cast<double>(b_proj);
}

double alpha(const Matrix& x, const Matrix& y) {
  require_paired(x, y, "alpha");
  const double denom = frobenius_norm_sq(x) * frobenius_norm_sq(y);
  if (!(denom > 0.0)) throw DomainError("alpha: undefined for zero X or Y");
  const double a = frobenius_norm_sq(matmul_tn(x, y)) / denom;
  return a > 1.0 ? 1.0 : a;
}

double exact_sketch_variance(const Matrix& x, const Matrix& y, std::size_t b_proj,
                             Distribution distribution) {
  require_paired(x, y, "exact_sketch_variance");
  if (b_proj < 1) throw DomainError("exact_sketch_variance: b_proj must be >= 1");
  double value = frobenius_norm_sq(x) * frobenius_norm_sq(y) + frobenius_norm_sq(matmul_tn(x, y));
  if (distribution == Distribution::Rademacher) value -= 2.0 * per_example_sum(x, y);
  return (value < 0.0 ? 0.0 : value) / static_cast<double>(b_proj);
}

VarianceReport sgd_report(const Matrix& x, const Matrix& y, std::int64_t layer_id,
                          std::int64_t step) {
  VarianceReport r;
  r.d_sgd_sq = d_sgd_sq(x, y);
  r.batch = x.rows();
  r.layer_id = layer_id;
  r.step = step;
  if (frobenius_norm_sq(x) > 0.0 && frobenius_norm_sq(y) > 0.0) r.alpha = alpha(x, y);
  return r;
}

VarianceReport check_bound(const Matrix& x, const Matrix& y, std::size_t b_proj,
                           std::int64_t layer_id, std::int64_t step) {
  VarianceReport r = sgd_report(x, y, layer_id, step);
  r.d_rmm_sq = d_rmm_sq(x, y, b_proj);
  r.proj = b_proj;
  if (r.alpha && *r.alpha > 0.0 && r.d_sgd_sq > 0.0) {
    const double b = static_cast<double>(r.batch);
    r.applicable = true;
    r.lhs = static_cast<double>(b_proj) / (b - 1.0) * (*r.d_rmm_sq / r.d_sgd_sq);
    r.bound = (*r.alpha + 1.0) / *r.alpha;
    r.violation = *r.lhs > *r.bound * (1.0 + kBoundSlack);
  }
  return r;
}

MonteCarloEstimate empirical_rmm_variance(const Matrix& x, const Matrix& y, const SketchSpec& spec,
                                          std::size_t n_samples, std::uint64_t seed) {
  require_paired(x, y, "empirical_rmm_variance");
  if (n_samples < 2) throw DomainError("empirical_rmm_variance: need at least 2 samples");
  const Matrix exact = matmul_tn(x, y);
  const std::size_t b_proj = compressed_dim(x.rows(), spec);

  // Welford on the per-sketch squared error.
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const SketchHandle h{derive_seed(seed, 0, static_cast<std::int64_t>(i)), x.rows(), b_proj,
                         spec.distribution};
    const Matrix s = sample_sketch(h);
    const Matrix approx = matmul_tn(project(x, s), project(y, s));
    const double err = frobenius_norm_sq(approx - exact);
    const double delta = err - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (err - mean);
  }
  const double var = m2 / static_cast<double>(n_samples - 1);
  return {mean, std::sqrt(var / static_cast<double>(n_samples)), n_samples};
}

}  // namespace rmmb
