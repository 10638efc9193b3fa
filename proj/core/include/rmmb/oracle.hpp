// Copyright 2026 The rmmb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "rmmb/matrix.hpp"

// Slow reference computations used to cross-check the library. Each takes a
// different route from the code it checks and shares no helpers with it
// beyond element access.
namespace rmmb::oracle {

// Textbook i-j-k triple loop.
Matrix naive_matmul(const Matrix& a, const Matrix& b);

// Σ_ij a_ij².
double elementwise_norm_sq(const Matrix& a);

// 1/(B(B-1)) Σ_k ‖B x_k y_kᵀ − XᵀY‖²_F, forming every per-example outer
// product explicitly.
double d_sgd_sq_definitional(const Matrix& x, const Matrix& y);

// ‖XᵀSSᵀY − XᵀY‖²_F for one explicit sketch, through the B x B matrix SSᵀ.
double sketch_error_sq(const Matrix& x, const Matrix& y, const Matrix& s);

// Central differences: d f / d v[i] for every i, perturbing v in place and
// restoring it.
std::vector<double> central_differences(std::span<double> v, const std::function<double()>& f,
                                        double h);

}  // namespace rmmb::oracle
