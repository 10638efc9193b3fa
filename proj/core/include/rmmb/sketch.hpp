// Copyright 2026 The rmmb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

#include "rmmb/matrix.hpp"

namespace rmmb {

enum class Distribution { Gaussian, Rademacher };

std::string_view to_string(Distribution d) noexcept;
// Accepts "gaussian" / "rademacher" (case-insensitive); throws ConfigError.
Distribution parse_distribution(std::string_view name);

// How the B x B_proj sketch is drawn and how large B_proj is.
struct SketchSpec {
  Distribution distribution = Distribution::Gaussian;
  double rho = 1.0;                       // in (0, 1]
  std::size_t bproj_min = 1;              // >= 1
  std::optional<std::size_t> bproj_max;   // unbounded when empty
  std::uint64_t master_seed = 0;

  // Throws ConfigError when an invariant is broken.
  void validate() const;

  bool operator==(const SketchSpec&) const = default;
};

// Everything needed to regenerate one sketch bit-for-bit.
struct SketchHandle {
  std::uint64_t seed = 0;
  std::size_t batch = 0;
  std::size_t proj = 0;
  Distribution distribution = Distribution::Gaussian;

  bool operator==(const SketchHandle&) const = default;
};

// clamp(round(rho * B), bproj_min, min(bproj_max, B)), rounding half away
// from zero. Always within [1, B].
std::size_t compressed_dim(std::size_t batch, const SketchSpec& spec);

// Seed for one (layer, step) invocation, mixed from the master seed.
std::uint64_t derive_seed(std::uint64_t master_seed, std::int64_t layer_id, std::int64_t step) noexcept;

SketchHandle derive_handle(const SketchSpec& spec, std::int64_t layer_id, std::int64_t step,
                           std::size_t batch);

// B x B_proj with entries P_ij / sqrt(B_proj), P_ij standard normal or a
// fair sign, so that E[S Sᵀ] = I. Row-major fill order from a fresh stream.
Matrix sample_sketch(const SketchHandle& handle);

// Sᵀ X, shape B_proj x N.
Matrix project(const Matrix& x, const Matrix& s);

}  // namespace rmmb
