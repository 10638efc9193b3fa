// Copyright 2026 The rmmb Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "rmmb/error.hpp"
#include "rmmb/linear.hpp"
#include "rmmb/oracle.hpp"
#include "rmmb/variance.hpp"
#include "test_util.hpp"

namespace rmmb {
namespace {

using testing::random_matrix;

SketchSpec half_gaussian(std::uint64_t seed = 11) {
  SketchSpec s;
  s.rho = 0.5;
  s.master_seed = seed;
  return s;
}

LinearLayer random_layer(Rng& rng, std::size_t n_out, std::size_t n_in,
                         std::optional<SketchSpec> spec = std::nullopt) {
  Matrix w = random_matrix(rng, n_out, n_in, 0.5);
  std::vector<double> b(n_out);
  for (double& v : b) v = rng.normal();
  if (spec) return LinearLayer::randomized(std::move(w), std::move(b), *spec);
  return LinearLayer::exact(std::move(w), std::move(b));
}

TEST(Forward, IdentityLayerReturnsInput) {
  const auto layer = LinearLayer::exact(Matrix::identity(3), {0.0, 0.0, 0.0});
  const Matrix x{{1.0, 2.0, 3.0}, {-1.0, 0.5, 4.0}};
  EXPECT_EQ(forward(layer, x, 0).output, x);
}

TEST(Forward, ZeroWeightGivesBroadcastBias) {
  const auto layer = LinearLayer::exact(Matrix(2, 3), {1.0, -2.0});
  const auto out = forward(layer, Matrix(4, 3, 7.0), 0).output;
  for (std::size_t r = 0; r < 4; ++r) {
    EXPECT_EQ(out(r, 0), 1.0);
    EXPECT_EQ(out(r, 1), -2.0);
  }
}

TEST(Forward, OutputIdenticalAcrossModes) {
  Rng rng(1);
  const auto exact = random_layer(rng, 5, 7);
  const auto rmm = LinearLayer::randomized(exact.weight, exact.bias, half_gaussian());
  const Matrix x = random_matrix(rng, 16, 7);
  EXPECT_EQ(forward(exact, x, 3).output, forward(rmm, x, 3).output);
}

TEST(Forward, StoresCompressedInput) {
  Rng rng(2);
  const auto layer = random_layer(rng, 4, 6, half_gaussian());
  const Matrix x = random_matrix(rng, 10, 6);
  const auto res = forward(layer, x, 5);
  ASSERT_TRUE(res.context.is_randomized());
  const auto* saved = res.context.randomized();
  EXPECT_EQ(saved->projected.rows(), 5u);
  EXPECT_EQ(saved->projected, project(x, sample_sketch(saved->handle)));
  EXPECT_EQ(saved->handle, derive_handle(*layer.sketch, layer.layer_id, 5, 10));
}

TEST(Backward, ZeroUpstreamGradientGivesZeros) {
  Rng rng(3);
  for (bool randomized : {false, true}) {
    const auto layer = random_layer(rng, 3, 4, randomized ? std::optional(half_gaussian()) : std::nullopt);
    const auto res = forward(layer, random_matrix(rng, 8, 4), 0);
    const auto g = backward(layer, res.context, Matrix(8, 3));
    EXPECT_EQ(g.d_input, Matrix(8, 4));
    EXPECT_EQ(g.d_weight, Matrix(3, 4));
    EXPECT_EQ(g.d_bias, std::vector<double>(3, 0.0));
  }
}

TEST(Backward, ExactModeMatchesOracle) {
  Rng rng(4);
  const auto layer = random_layer(rng, 5, 6);
  const Matrix x = random_matrix(rng, 9, 6);
  const Matrix dy = random_matrix(rng, 9, 5);
  const auto g = backward(layer, forward(layer, x, 0).context, dy);
  EXPECT_LE(max_rel_diff(g.d_weight, oracle::naive_matmul(transpose(dy), x)), 1e-12);
  EXPECT_LE(max_rel_diff(g.d_input, oracle::naive_matmul(dy, layer.weight)), 1e-12);
  for (std::size_t j = 0; j < 5; ++j) {
    double sum = 0.0;
    for (std::size_t r = 0; r < 9; ++r) sum += dy(r, j);
    EXPECT_NEAR(g.d_bias[j], sum, 1e-12);
  }
}

TEST(Backward, InputAndBiasGradientsAreExactInBothModes) {
  Rng rng(5);
  const auto exact = random_layer(rng, 4, 5);
  const auto rmm = LinearLayer::randomized(exact.weight, exact.bias, half_gaussian());
  const Matrix x = random_matrix(rng, 12, 5);
  const Matrix dy = random_matrix(rng, 12, 4);
  const auto ge = backward(exact, forward(exact, x, 1).context, dy);
  const auto gr = backward(rmm, forward(rmm, x, 1).context, dy);
  EXPECT_EQ(ge.d_input, gr.d_input);
  EXPECT_EQ(ge.d_bias, gr.d_bias);
  EXPECT_NE(ge.d_weight, gr.d_weight);
}

TEST(Backward, RandomizedWeightGradientReproducesBitwise) {
  Rng rng(6);
  const auto layer = random_layer(rng, 4, 5, half_gaussian());
  const Matrix x = random_matrix(rng, 12, 5);
  const Matrix dy = random_matrix(rng, 12, 4);
  const auto a = backward(layer, forward(layer, x, 9).context, dy);
  const auto b = backward(layer, forward(layer, x, 9).context, dy);
  EXPECT_EQ(a.d_weight, b.d_weight);
  const auto s = sample_sketch(derive_handle(*layer.sketch, 0, 9, 12));
  EXPECT_EQ(a.d_weight, matmul(matmul_tn(dy, s), project(x, s)));
}

TEST(Backward, FullSketchAtRhoOneDiffersOnlyByNoise) {
  // rho = 1 keeps B columns but S is still random, so dW is unbiased, not exact.
  Rng rng(7);
  SketchSpec spec;
  spec.master_seed = 4;
  const auto layer = random_layer(rng, 3, 3, spec);
  const Matrix x = random_matrix(rng, 6, 3);
  const auto res = forward(layer, x, 0);
  EXPECT_EQ(res.context.stored().rows(), 6u);
}

// Mean of dW_rmm over many sketches converges to dW_exact.
TEST(Backward, RandomizedWeightGradientIsUnbiased) {
  Rng rng(8);
  const auto base = random_layer(rng, 3, 4);
  const Matrix x = random_matrix(rng, 16, 4);
  const Matrix dy = random_matrix(rng, 16, 3);
  const Matrix exact = exact_weight_grad(x, dy);
  for (Distribution d : {Distribution::Gaussian, Distribution::Rademacher}) {
    SketchSpec spec = half_gaussian(123);
    spec.distribution = d;
    const auto layer = LinearLayer::randomized(base.weight, base.bias, spec);
    const std::size_t n = 8000;
    Matrix sum(3, 4), sum_sq(3, 4);
    for (std::size_t i = 0; i < n; ++i) {
      const auto g = backward(layer, forward(layer, x, static_cast<std::int64_t>(i)).context, dy);
      for (std::size_t e = 0; e < sum.size(); ++e) {
        sum.data()[e] += g.d_weight.data()[e];
        sum_sq.data()[e] += g.d_weight.data()[e] * g.d_weight.data()[e];
      }
    }
    for (std::size_t e = 0; e < exact.size(); ++e) {
      const double mean = sum.data()[e] / n;
      const double var = (sum_sq.data()[e] - n * mean * mean) / (n - 1);
      EXPECT_LE(std::abs(mean - exact.data()[e]), 4.0 * std::sqrt(var / n)) << to_string(d);
    }
  }
}

// Mean ‖dW_rmm − dW_exact‖² matches the fourth-moment formula for the sketch.
TEST(Backward, RandomizedWeightGradientVarianceMatchesFormula) {
  Rng rng(9);
  const auto base = random_layer(rng, 3, 4);
  const Matrix x = random_matrix(rng, 12, 4);
  const Matrix dy = random_matrix(rng, 12, 3);
  const Matrix exact = exact_weight_grad(x, dy);
  for (Distribution d : {Distribution::Gaussian, Distribution::Rademacher}) {
    SketchSpec spec = half_gaussian(77);
    spec.distribution = d;
    const auto layer = LinearLayer::randomized(base.weight, base.bias, spec);
    const std::size_t n = 20000;
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto g = backward(layer, forward(layer, x, static_cast<std::int64_t>(i)).context, dy);
      const double err = frobenius_norm_sq(g.d_weight - exact);
      sum += err;
      sum_sq += err * err;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sum_sq - n * mean * mean) / (n - 1) / n);
    const double expected = exact_sketch_variance(x, dy, 6, d);
    EXPECT_LE(std::abs(mean - expected), 4.0 * se) << to_string(d);
  }
}

TEST(ExactWeightGrad, Examples) {
  const Matrix x{{1.0, 2.0}};
  const Matrix dy{{3.0}};
  EXPECT_EQ(exact_weight_grad(x, dy), (Matrix{{3.0, 6.0}}));
  const Matrix x2{{1.0, 0.0}, {0.0, 1.0}};
  const Matrix dy2{{1.0}, {1.0}};
  EXPECT_EQ(exact_weight_grad(x2, dy2), (Matrix{{1.0, 1.0}}));
  EXPECT_THROW(exact_weight_grad(Matrix(3, 2), Matrix(2, 1)), ShapeError);
}

TEST(Memory, StoredBytesExamples) {
  Rng rng(10);
  const auto exact = random_layer(rng, 4, 16);
  const Matrix x = random_matrix(rng, 64, 16);
  const auto ce = forward(exact, x, 0).context;
  EXPECT_EQ(stored_activation_bytes(ce), 8192u);

  SketchSpec quarter;
  quarter.rho = 0.25;
  const auto rmm = LinearLayer::randomized(exact.weight, exact.bias, quarter);
  const auto cr = forward(rmm, x, 0).context;
  EXPECT_EQ(stored_activation_bytes(cr), 2048u);
  EXPECT_DOUBLE_EQ(memory_ratio(64, quarter), 0.25);
  EXPECT_DOUBLE_EQ(static_cast<double>(stored_activation_bytes(cr)) /
                       static_cast<double>(stored_activation_bytes(ce)),
                   0.25);
  EXPECT_DOUBLE_EQ(memory_ratio(64, SketchSpec{}), 1.0);
}

TEST(Memory, StoredBytesFollowCompressedDim) {
  Rng rng(11);
  for (std::size_t b : {2u, 7u, 33u, 64u}) {
    for (double rho : {0.1, 0.3, 0.5, 1.0}) {
      SketchSpec spec;
      spec.rho = rho;
      const auto layer = random_layer(rng, 2, 5, spec);
      const auto ctx = forward(layer, random_matrix(rng, b, 5), 0).context;
      EXPECT_EQ(stored_activation_bytes(ctx), 8u * compressed_dim(b, spec) * 5u);
    }
  }
}

// Input gradient against central differences of L = Σ G ⊙ Y.
TEST(Backward, InputGradientMatchesFiniteDifferences) {
  Rng rng(12);
  for (bool randomized : {false, true}) {
    const auto layer =
        random_layer(rng, 3, 4, randomized ? std::optional(half_gaussian()) : std::nullopt);
    Matrix x = random_matrix(rng, 6, 4);
    const Matrix g = random_matrix(rng, 6, 3);
    auto loss = [&] {
      const Matrix y = forward(layer, x, 0).output;
      double s = 0.0;
      for (std::size_t e = 0; e < y.size(); ++e) s += y.data()[e] * g.data()[e];
      return s;
    };
    const auto fd = oracle::central_differences(x.data(), loss, 1e-5);
    const auto grads = backward(layer, forward(layer, x, 0).context, g);
    double num = 0.0, den = 0.0;
    for (std::size_t e = 0; e < fd.size(); ++e) {
      num += std::pow(grads.d_input.data()[e] - fd[e], 2);
      den += fd[e] * fd[e];
    }
    EXPECT_LE(std::sqrt(num / den), 1e-6);
  }
}

TEST(Backward, DetectsCorruptedHandle) {
  Rng rng(13);
  const auto layer = random_layer(rng, 3, 4, half_gaussian());
  auto res = forward(layer, random_matrix(rng, 8, 4), 0);
  res.context.mutable_randomized()->handle.proj = 3;
  EXPECT_THROW(backward(layer, res.context, Matrix(8, 3)), IntegrityError);
  res.context.mutable_randomized()->handle.proj = 9;
  EXPECT_THROW(backward(layer, res.context, Matrix(8, 3)), IntegrityError);
}

TEST(Linear, ShapeErrors) {
  Rng rng(14);
  const auto layer = random_layer(rng, 3, 4);
  EXPECT_THROW(forward(layer, Matrix(5, 3), 0), ShapeError);
  EXPECT_THROW(forward(layer, Matrix(0, 4), 0), ShapeError);
  const auto ctx = forward(layer, Matrix(5, 4), 0).context;
  EXPECT_THROW(backward(layer, ctx, Matrix(5, 2)), ShapeError);
  EXPECT_THROW(backward(layer, ctx, Matrix(6, 3)), ShapeError);
  EXPECT_THROW(LinearLayer::exact(Matrix(3, 4), {0.0, 0.0}), ShapeError);
  SketchSpec bad;
  bad.rho = 0.0;
  EXPECT_THROW(LinearLayer::randomized(Matrix(3, 4), {0.0, 0.0, 0.0}, bad), ConfigError);
}

TEST(Checkpoint, BlobLayout) {
  const auto layer = LinearLayer::exact(Matrix{{1.0, 2.0}}, {0.5});
  const auto blob = serialize_layer(layer);
  ASSERT_EQ(blob.size(), 4u + 8u + 3u * 8u);
  EXPECT_EQ(std::string(blob.begin(), blob.begin() + 4), "RMML");
  EXPECT_EQ(blob[4], 1);
  EXPECT_EQ(blob[8], 2);
  // 1.0 is 0x3ff0000000000000, so its bytes end in f0 3f.
  EXPECT_EQ(blob[12 + 6], 0xf0);
  EXPECT_EQ(blob[12 + 7], 0x3f);
}

TEST(Checkpoint, RoundTripIsBitwise) {
  Rng rng(15);
  const auto layer = random_layer(rng, 5, 7);
  std::stringstream buf;
  write_layer(buf, layer);
  const auto back = read_layer(buf, 3);
  EXPECT_EQ(back.weight, layer.weight);
  EXPECT_EQ(back.bias, layer.bias);
  EXPECT_EQ(back.layer_id, 3);
  EXPECT_FALSE(back.is_randomized());
  EXPECT_EQ(deserialize_layer(serialize_layer(layer)).weight, layer.weight);
}

TEST(Checkpoint, RejectsCorruptInput) {
  Rng rng(16);
  auto blob = serialize_layer(random_layer(rng, 2, 2));
  auto bad_magic = blob;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_layer(bad_magic), IntegrityError);
  for (std::size_t cut : {0u, 3u, 8u, 11u, 20u}) {
    EXPECT_THROW(deserialize_layer(std::span(blob).first(cut)), IntegrityError) << cut;
  }
  EXPECT_THROW(deserialize_layer(std::span(blob).first(blob.size() - 1)), IntegrityError);
}

}  // namespace
}  // namespace rmmb
