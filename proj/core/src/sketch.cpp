// Copyright 2026 The rmmb Authors
// SPDX-License-Identifier: Apache-2.0

#include "rmmb/sketch.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "rmmb/error.hpp"
#include "rmmb/rng.hpp"

namespace rmmb {

std::string_view to_string(Distribution d) noexcept {
  switch (d) {
    case Distribution::Gaussian: return "gaussian";
    case Distribution::Rademacher: return "rademacher";
  }
  return "unknown";
}

Distribution parse_distribution(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "gaussian") return Distribution::Gaussian;
  if (lower == "rademacher") return Distribution::Rademacher;
  throw ConfigError("unknown sketch distribution '" + std::string(name) + "'");
}

void SketchSpec::validate() const {
  if (!(rho > 0.0 && rho <= 1.0)) {
    throw ConfigError("sketch: rho must lie in (0, 1], got " + std::to_string(rho));
  }
  if (bproj_min < 1) throw ConfigError("sketch: bproj_min must be >= 1");
  if (bproj_max && *bproj_max < bproj_min) {
    throw ConfigError("sketch: bproj_max (" + std::to_string(*bproj_max) + ") < bproj_min (" +
                      std::to_string(bproj_min) + ")");
  }
}

std::size_t compressed_dim(std::size_t batch, const SketchSpec& spec) {
  if (batch == 0) throw DomainError("compressed_dim: batch must be >= 1");
  spec.validate();
  const double scaled = std::round(spec.rho * static_cast<double>(batch));
  const std::size_t upper = std::min(spec.bproj_max.value_or(batch), batch);
  const std::size_t lower = std::min(spec.bproj_min, upper);
  return std::clamp(static_cast<std::size_t>(scaled), lower, upper);
}

std::uint64_t derive_seed(std::uint64_t master_seed, std::int64_t layer_id,
                          std::int64_t step) noexcept {
  std::uint64_t h = mix64(master_seed);
  h = mix64(h ^ static_cast<std::uint64_t>(layer_id));
  h = mix64(h ^ (static_cast<std::uint64_t>(step) * 0xd6e8feb86659fd93ULL));
  return h;
}

SketchHandle derive_handle(const SketchSpec& spec, std::int64_t layer_id, std::int64_t step,
                           std::size_t batch) {
  return SketchHandle{derive_seed(spec.master_seed, layer_id, step), batch,
                      compressed_dim(batch, spec), spec.distribution};
}

Matrix sample_sketch(const SketchHandle& handle) {
  if (handle.batch == 0 || handle.proj == 0 || handle.proj > handle.batch) {
    throw IntegrityError("sample_sketch: invalid handle dims " + std::to_string(handle.batch) +
                         "x" + std::to_string(handle.proj));
  }
  Rng rng(handle.seed);
  Matrix s(handle.batch, handle.proj);
  const double scale = 1.0 / std::sqrt(static_cast<double>(handle.proj));
  if (handle.distribution == Distribution::Gaussian) {
    for (double& v : s.data()) v = rng.normal() * scale;
  } else {
    for (double& v : s.data()) v = rng.sign() * scale;
  }
  return s;
}

Matrix project(const Matrix& x, const Matrix& s) {
  if (x.rows() != s.rows()) {
    throw ShapeError("project: batch rows differ, X " + x.shape_string() + " vs S " +
                     s.shape_string());
  }
  return matmul_tn(s, x);
}

}  // namespace rmmb
