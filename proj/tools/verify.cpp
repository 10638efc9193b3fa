// Copyright 2026 The rmmb Authors
// SPDX-License-Identifier: Apache-2.0

// The `verify` suites. Every check emits
//   {"suite", "name", "expected", "observed", "tolerance", "pass"}
// and the command exits 1 if any check fails.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "commands.hpp"
#include "rmmb/error.hpp"
#include "rmmb/linear.hpp"
#include "rmmb/oracle.hpp"
#include "rmmb/rng.hpp"
#include "rmmb/sketch.hpp"
#include "rmmb/trainer.hpp"
#include "rmmb/variance.hpp"

namespace rmmb::cli {

namespace {

using nlohmann::json;

class Checker {
 public:
  Checker(std::string suite, JsonlSink& sink) : suite_(std::move(suite)), sink_(sink) {}

  bool record(const std::string& name, const json& expected, const json& observed,
              double tolerance, bool pass) {
    sink_.emit({{"suite", suite_},
                {"name", name},
                {"expected", expected},
                {"observed", observed},
                {"tolerance", tolerance},
                {"pass", pass}});
    all_pass_ = all_pass_ && pass;
    return pass;
  }

  // |observed − expected| <= tol · |expected|.
  bool relative(const std::string& name, double expected, double observed, double tol) {
    const double err = std::abs(observed - expected);
    return record(name, expected, observed, tol, err <= tol * std::abs(expected));
  }

  bool all_pass() const noexcept { return all_pass_; }

 private:
  std::string suite_;
  JsonlSink& sink_;
  bool all_pass_ = true;
};

Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

std::size_t uniform_int(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

LinearLayer random_layer(Rng& rng, std::size_t n_out, std::size_t n_in,
                         const std::optional<SketchSpec>& sketch) {
  Matrix w = random_matrix(rng, n_out, n_in);
  std::vector<double> b(n_out);
  for (double& v : b) v = rng.normal();
  if (sketch) return LinearLayer::randomized(std::move(w), std::move(b), *sketch, 7);
  return LinearLayer::exact(std::move(w), std::move(b), 7);
}

// ε-counterexample: X = [[1,0],[−ε,0]], Y = [[1,0],[1/ε,0]].
bool suite_counterexample(const json& cfg, JsonlSink& sink) {
  Checker c("counterexample", sink);
  const double tol = cfg.at("rel_tol").get<double>();
  for (double eps : cfg.at("eps").get<std::vector<double>>()) {
    const Matrix x{{1.0, 0.0}, {-eps, 0.0}};
    const Matrix y{{1.0, 0.0}, {1.0 / eps, 0.0}};
    const std::string tag = "eps=" + json(eps).dump();
    c.relative("(B-1)*d_sgd_sq " + tag, 4.0, d_sgd_sq(x, y), tol);
    c.relative("B_proj*d_rmm_sq " + tag, 2.0 + eps * eps + 1.0 / (eps * eps),
               1.0 * d_rmm_sq(x, y, 1), tol);
    const VarianceReport r = check_bound(x, y, 1);
    c.record("alpha=0 is non-applicable " + tag, false, r.applicable, 0.0,
             !r.applicable && r.alpha && *r.alpha == 0.0);
  }
  return c.all_pass();
}

bool suite_sampling_variance(const json& cfg, std::uint64_t seed, JsonlSink& sink) {
  Checker c("sampling_variance_oracle", sink);
  Rng rng(derive_seed(seed, 1, 0));
  const auto cases = cfg.at("cases").get<std::size_t>();
  const auto max_batch = cfg.at("max_batch").get<std::size_t>();
  const auto max_dim = cfg.at("max_dim").get<std::size_t>();
  const double tol = cfg.at("rel_tol").get<double>();
  double worst = 0.0;
  for (std::size_t i = 0; i < cases; ++i) {
    const std::size_t b = uniform_int(rng, 2, max_batch);
    const Matrix x = random_matrix(rng, b, uniform_int(rng, 1, max_dim));
    const Matrix y = random_matrix(rng, b, uniform_int(rng, 1, max_dim));
    const double oracle = oracle::d_sgd_sq_definitional(x, y);
    worst = std::max(worst, std::abs(d_sgd_sq(x, y) - oracle) / oracle);
  }
  c.record("max relative error over " + std::to_string(cases) + " draws", 0.0, worst, tol,
           worst <= tol);
  return c.all_pass();
}

bool suite_closed_form(const json& cfg, std::uint64_t seed, JsonlSink& sink) {
  Checker c("sketch_variance_closed_form", sink);
  Rng rng(derive_seed(seed, 2, 0));
  const auto cases = cfg.at("cases").get<std::size_t>();
  const auto samples = cfg.at("samples").get<std::size_t>();
  const auto max_batch = cfg.at("max_batch").get<std::size_t>();
  const auto max_dim = cfg.at("max_dim").get<std::size_t>();
  const double tol = cfg.at("rel_tol").get<double>();
  for (std::size_t i = 0; i < cases; ++i) {
    const std::size_t b = uniform_int(rng, 2, max_batch);
    const std::size_t k = uniform_int(rng, 1, b);
    const Matrix x = random_matrix(rng, b, uniform_int(rng, 1, max_dim));
    const Matrix y = random_matrix(rng, b, uniform_int(rng, 1, max_dim));
    SketchSpec spec;
    spec.bproj_min = k;
    spec.bproj_max = k;
    const std::uint64_t mc_seed = rng.next_u64();
    const MonteCarloEstimate est = empirical_rmm_variance(x, y, spec, samples, mc_seed);
    const std::string tag = "B=" + std::to_string(b) + " B_proj=" + std::to_string(k) + " N=" +
                            std::to_string(x.cols()) + " M=" + std::to_string(y.cols());
    c.relative("closed form vs Monte Carlo " + tag, d_rmm_sq(x, y, k), est.mean, tol);
  }
  return c.all_pass();
}

// Same Monte Carlo, against the fourth-moment identity for Gaussian sketches.
bool suite_second_moment(const json& cfg, std::uint64_t seed, JsonlSink& sink) {
  Checker c("sketch_second_moment", sink);
  Rng rng(derive_seed(seed, 9, 0));
  const auto cases = cfg.at("cases").get<std::size_t>();
  const auto samples = cfg.at("samples").get<std::size_t>();
  const auto max_batch = cfg.at("max_batch").get<std::size_t>();
  const auto max_dim = cfg.at("max_dim").get<std::size_t>();
  const double n_se = cfg.at("n_se").get<double>();
  for (std::size_t i = 0; i < cases; ++i) {
    const std::size_t b = uniform_int(rng, 2, max_batch);
    const std::size_t k = uniform_int(rng, 1, b);
    const Matrix x = random_matrix(rng, b, uniform_int(rng, 1, max_dim));
    const Matrix y = random_matrix(rng, b, uniform_int(rng, 1, max_dim));
    for (Distribution d : {Distribution::Gaussian, Distribution::Rademacher}) {
      SketchSpec spec;
      spec.distribution = d;
      spec.bproj_min = k;
      spec.bproj_max = k;
      const MonteCarloEstimate est = empirical_rmm_variance(x, y, spec, samples, rng.next_u64());
      const double expected = exact_sketch_variance(x, y, k, d);
      // B = 2, B_proj = 1 Rademacher has a constant error: zero spread.
      const double slack = n_se * est.std_error + 1e-9 * std::abs(expected);
      c.record(std::string(to_string(d)) + " B=" + std::to_string(b) +
                   " B_proj=" + std::to_string(k) + " (within n_se standard errors)",
               expected, est.mean, n_se, std::abs(est.mean - expected) <= slack);
    }
  }
  return c.all_pass();
}

bool suite_unbiasedness(const json& cfg, std::uint64_t seed, JsonlSink& sink) {
  Checker c("unbiasedness", sink);
  Rng rng(derive_seed(seed, 3, 0));
  const auto samples = cfg.at("samples").get<std::size_t>();
  const auto batch = cfg.at("batch").get<std::size_t>();
  const auto n_in = cfg.at("n_in").get<std::size_t>();
  const auto n_out = cfg.at("n_out").get<std::size_t>();
  const double n_se = cfg.at("n_se").get<double>();
  SketchSpec spec;
  spec.rho = cfg.at("rho").get<double>();
  spec.master_seed = rng.next_u64();
  const LinearLayer layer = random_layer(rng, n_out, n_in, spec);
  const Matrix x = random_matrix(rng, batch, n_in);
  const Matrix dy = random_matrix(rng, batch, n_out);
  const Matrix exact = exact_weight_grad(x, dy);

  Matrix mean(n_out, n_in);
  Matrix m2(n_out, n_in);
  for (std::size_t s = 0; s < samples; ++s) {
    const auto fwd = forward(layer, x, static_cast<std::int64_t>(s));
    const Matrix dw = backward(layer, fwd.context, dy).d_weight;
    for (std::size_t e = 0; e < dw.size(); ++e) {
      const double delta = dw.data()[e] - mean.data()[e];
      mean.data()[e] += delta / static_cast<double>(s + 1);
      m2.data()[e] += delta * (dw.data()[e] - mean.data()[e]);
    }
  }
  double worst_z = 0.0;
  for (std::size_t e = 0; e < exact.size(); ++e) {
    const double se = std::sqrt(m2.data()[e] / static_cast<double>(samples - 1) /
                                static_cast<double>(samples));
    worst_z = std::max(worst_z, std::abs(mean.data()[e] - exact.data()[e]) / se);
  }
  c.record("max |mean - exact| / stderr over " + std::to_string(exact.size()) + " entries", 0.0,
           worst_z, n_se, worst_z <= n_se);
  return c.all_pass();
}

bool suite_ratio_bound(const json& cfg, std::uint64_t seed, JsonlSink& sink) {
  Checker c("ratio_bound_sweep", sink);
  Rng rng(derive_seed(seed, 4, 0));
  const auto draws = cfg.at("draws").get<std::size_t>();
  const auto min_batch = cfg.at("min_batch").get<std::size_t>();
  const auto max_batch = cfg.at("max_batch").get<std::size_t>();
  const auto max_dim = cfg.at("max_dim").get<std::size_t>();
  std::size_t applicable = 0;
  std::size_t violations = 0;
  double worst_ratio = 0.0;
  for (std::size_t i = 0; i < draws; ++i) {
    const std::size_t b = uniform_int(rng, min_batch, max_batch);
    const std::size_t k = uniform_int(rng, 1, b);
    const Matrix x = random_matrix(rng, b, uniform_int(rng, 1, max_dim));
    const Matrix y = random_matrix(rng, b, uniform_int(rng, 1, max_dim));
    const VarianceReport r = check_bound(x, y, k);
    if (!r.applicable) continue;
    ++applicable;
    violations += r.violation ? 1 : 0;
    worst_ratio = std::max(worst_ratio, *r.lhs / *r.bound);
  }
  c.record("violations among " + std::to_string(applicable) + " applicable draws", 0, violations,
           0.0, violations == 0);
  c.record("max lhs/bound", 1.0, worst_ratio, 0.0, worst_ratio <= 1.0);
  return c.all_pass();
}

bool suite_rematerialization(const json& cfg, std::uint64_t seed, JsonlSink& sink) {
  Checker c("rematerialization", sink);
  Rng rng(derive_seed(seed, 5, 0));
  const auto batch = cfg.at("batch").get<std::size_t>();
  const auto n_in = cfg.at("n_in").get<std::size_t>();
  const auto n_out = cfg.at("n_out").get<std::size_t>();
  for (Distribution d : {Distribution::Gaussian, Distribution::Rademacher}) {
    SketchSpec spec;
    spec.distribution = d;
    spec.rho = cfg.at("rho").get<double>();
    spec.master_seed = rng.next_u64();
    const LinearLayer layer = random_layer(rng, n_out, n_in, spec);
    const Matrix x = random_matrix(rng, batch, n_in);
    const Matrix dy = random_matrix(rng, batch, n_out);
    const auto fwd = forward(layer, x, 3);
    const auto g1 = backward(layer, fwd.context, dy);
    const auto g2 = backward(layer, fwd.context, dy);
    const std::string tag = std::string(to_string(d));
    c.record("backward twice gives bitwise-identical dW (" + tag + ")", true,
             g1.d_weight == g2.d_weight, 0.0, g1.d_weight == g2.d_weight);
    // The saved projection is Sᵀx for the forward-time S; recomputing it from
    // the regenerated S reproduces it bit for bit only if S is identical.
    const auto& saved = *fwd.context.randomized();
    const Matrix again = project(x, sample_sketch(saved.handle));
    c.record("regenerated sketch reproduces forward projection (" + tag + ")", true,
             again == saved.projected, 0.0, again == saved.projected);
  }
  return c.all_pass();
}

double normwise_rel(std::span<const double> approx, std::span<const double> exact) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < exact.size(); ++i) {
    num += (approx[i] - exact[i]) * (approx[i] - exact[i]);
    den += exact[i] * exact[i];
  }
  return std::sqrt(num / den);
}

bool suite_gradient_check(const json& cfg, std::uint64_t seed, JsonlSink& sink) {
  Checker c("gradient_check", sink);
  Rng rng(derive_seed(seed, 6, 0));
  const double h = cfg.at("h").get<double>();
  const double dx_tol = cfg.at("dx_rel_tol").get<double>();
  const std::size_t batch = 12, n_in = 5, n_out = 4;
  SketchSpec spec;
  spec.rho = 0.5;
  spec.master_seed = rng.next_u64();
  for (const bool randomized : {false, true}) {
    const LinearLayer layer =
        random_layer(rng, n_out, n_in, randomized ? std::optional(spec) : std::nullopt);
    Matrix x = random_matrix(rng, batch, n_in);
    const Matrix g = random_matrix(rng, batch, n_out);
    const auto fwd = forward(layer, x, 0);
    const Matrix dx = backward(layer, fwd.context, g).d_input;
    auto loss = [&] {
      const Matrix out = forward(layer, x, 0).output;
      double acc = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i) acc += out.data()[i] * g.data()[i];
      return acc;
    };
    const auto fd = oracle::central_differences(x.data(), loss, h);
    const double err = normwise_rel(fd, dx.data());
    c.record(std::string("dX vs central differences (") + (randomized ? "randomized" : "exact") +
                 ")",
             0.0, err, dx_tol, err <= dx_tol);
  }

  // Whole-model weight gradients through softmax cross-entropy and ReLU.
  const double dw_tol = cfg.at("dw_rel_tol").get<double>();
  const auto entries = cfg.at("entries").get<std::size_t>();
  BlobParams blobs;
  blobs.n_samples = 16;
  blobs.dim = 4;
  blobs.classes = 3;
  blobs.separation = 2.0;
  blobs.seed = rng.next_u64();
  const Dataset data = generate_blobs(blobs);
  MlpModel model = MlpModel::init(4, 6, 3, std::nullopt, rng.next_u64());
  const StepGradients grads = compute_step(model, data.features, data.labels, 0, false, false);
  std::vector<double> analytic;
  std::vector<double> numeric;
  for (std::size_t i = 0; i < entries; ++i) {
    const bool first = rng.below(2) == 0;
    LinearLayer& layer = first ? model.layer1 : model.layer2;
    const Matrix& dw = first ? grads.layer1.d_weight : grads.layer2.d_weight;
    const auto e = static_cast<std::size_t>(rng.below(layer.weight.size()));
    analytic.push_back(dw.data()[e]);
    numeric.push_back(oracle::central_differences(layer.weight.data().subspan(e, 1),
                                                  [&] { return evaluate(model, data).loss; },
                                                  h)[0]);
  }
  const double werr = normwise_rel(numeric, analytic);
  c.record("model dW vs central differences (" + std::to_string(entries) + " entries, exact)", 0.0,
           werr, dw_tol, werr <= dw_tol);
  return c.all_pass();
}

bool suite_memory(const json& cfg, std::uint64_t seed, JsonlSink& sink) {
  Checker c("memory_accounting", sink);
  Rng rng(derive_seed(seed, 7, 0));
  const auto n_in = cfg.at("n_in").get<std::size_t>();
  const auto n_out = cfg.at("n_out").get<std::size_t>();
  std::size_t mismatches = 0;
  std::size_t points = 0;
  for (auto batch : cfg.at("batches").get<std::vector<std::size_t>>()) {
    for (double rho : cfg.at("rhos").get<std::vector<double>>()) {
      SketchSpec spec;
      spec.rho = rho;
      spec.master_seed = rng.next_u64();
      const LinearLayer layer = random_layer(rng, n_out, n_in, spec);
      const auto fwd = forward(layer, random_matrix(rng, batch, n_in), 0);
      const std::size_t proj = compressed_dim(batch, spec);
      const std::size_t bytes = stored_activation_bytes(fwd.context);
      const bool ok = bytes == 8 * proj * n_in &&
                      memory_ratio(batch, spec) ==
                          static_cast<double>(proj) / static_cast<double>(batch) &&
                      fwd.context.randomized()->projected.rows() == proj;
      mismatches += ok ? 0 : 1;
      ++points;
    }
  }
  c.record("grid points with bytes != 8*B_proj*N_in (of " + std::to_string(points) + ")", 0,
           mismatches, 0.0, mismatches == 0);

  SketchSpec spec;
  spec.rho = 0.1;
  const std::size_t proj = compressed_dim(64, spec);
  const double factor = 64.0 / static_cast<double>(proj);
  c.record("rho=0.1 B=64 B_proj", 6, proj, 0.0, proj == 6);
  c.relative("rho=0.1 B=64 saving factor", 64.0 / 6.0, factor, 1e-15);
  return c.all_pass();
}

}  // namespace

int run_verify(const json& config, JsonlSink& sink) {
  const auto seed = config.at("seed").get<std::uint64_t>();
  for (const auto& suite : config.at("suites").get<std::vector<std::string>>()) {
    if (!config.contains(suite) || suite == "seed" || suite == "suites") {
      throw UsageError("verify: unknown suite '" + suite + "'");
    }
  }
  bool pass = true;
  for (const auto& suite : config.at("suites").get<std::vector<std::string>>()) {
    if (suite == "counterexample") {
      pass &= suite_counterexample(config.at(suite), sink);
    } else if (suite == "sampling_variance_oracle") {
      pass &= suite_sampling_variance(config.at(suite), seed, sink);
    } else if (suite == "sketch_variance_closed_form") {
      pass &= suite_closed_form(config.at(suite), seed, sink);
    } else if (suite == "sketch_second_moment") {
      pass &= suite_second_moment(config.at(suite), seed, sink);
    } else if (suite == "unbiasedness") {
      pass &= suite_unbiasedness(config.at(suite), seed, sink);
    } else if (suite == "ratio_bound_sweep") {
      pass &= suite_ratio_bound(config.at(suite), seed, sink);
    } else if (suite == "rematerialization") {
      pass &= suite_rematerialization(config.at(suite), seed, sink);
    } else if (suite == "gradient_check") {
      pass &= suite_gradient_check(config.at(suite), seed, sink);
    } else if (suite == "memory_accounting") {
      pass &= suite_memory(config.at(suite), seed, sink);
    } else {
      throw UsageError("verify: unknown suite '" + suite + "'");
    }
  }
  sink.emit({{"suite", "summary"}, {"pass", pass}});
  return pass ? kPass : kCheckFailed;
}

}  // namespace rmmb::cli
