// Copyright 2026 The rmmb Authors
// SPDX-License-Identifier: Apache-2.0

#include "rmmb/oracle.hpp"

#include <stdexcept>

namespace rmmb::oracle {

Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("naive_matmul: shape mismatch");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      c(i, j) = acc;
    }
  return c;
}

double elementwise_norm_sq(const Matrix& a) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) acc += a(i, j) * a(i, j);
  return acc;
}

namespace {

Matrix naive_transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

}  // namespace

double d_sgd_sq_definitional(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows() || x.rows() < 2) {
    throw std::invalid_argument("d_sgd_sq_definitional: need matching rows, B >= 2");
  }
  const std::size_t batch = x.rows();
  const double b = static_cast<double>(batch);
  const Matrix mean = naive_matmul(naive_transpose(x), y);
  double total = 0.0;
  for (std::size_t k = 0; k < batch; ++k) {
    Matrix dev(x.cols(), y.cols());
    for (std::size_t i = 0; i < x.cols(); ++i)
      for (std::size_t j = 0; j < y.cols(); ++j) dev(i, j) = b * x(k, i) * y(k, j) - mean(i, j);
    total += elementwise_norm_sq(dev);
  }
  return total / (b * (b - 1.0));
}

double sketch_error_sq(const Matrix& x, const Matrix& y, const Matrix& s) {
  const Matrix sst = naive_matmul(s, naive_transpose(s));
  const Matrix xt = naive_transpose(x);
  const Matrix approx = naive_matmul(naive_matmul(xt, sst), y);
  const Matrix exact = naive_matmul(xt, y);
  double acc = 0.0;
  for (std::size_t i = 0; i < exact.rows(); ++i)
    for (std::size_t j = 0; j < exact.cols(); ++j) {
      const double d = approx(i, j) - exact(i, j);
      acc += d * d;
    }
  return acc;
}

std::vector<double> central_differences(std::span<double> v, const std::function<double()>& f,
                                        double h) {
  std::vector<double> grad(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double saved = v[i];
    v[i] = saved + h;
    const double up = f();
    v[i] = saved - h;
    const double down = f();
    v[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace rmmb::oracle
