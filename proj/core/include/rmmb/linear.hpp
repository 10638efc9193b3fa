// Copyright 2026 The rmmb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "rmmb/matrix.hpp"
#include "rmmb/sketch.hpp"

namespace rmmb {

// Affine layer y = x Wᵀ + 1 bᵀ. With a sketch spec set, forward keeps only
// the compressed input Sᵀx and the seed of S; the weight gradient is then
// the unbiased estimate (dyᵀ S) Sᵀx.
struct LinearLayer {
  Matrix weight;               // N_out x N_in
  std::vector<double> bias;    // N_out
  std::optional<SketchSpec> sketch;
  std::int64_t layer_id = 0;

  static LinearLayer exact(Matrix weight, std::vector<double> bias, std::int64_t layer_id = 0);
  static LinearLayer randomized(Matrix weight, std::vector<double> bias, SketchSpec spec,
                                std::int64_t layer_id = 0);

  std::size_t in_features() const noexcept { return weight.cols(); }
  std::size_t out_features() const noexcept { return weight.rows(); }
  bool is_randomized() const noexcept { return sketch.has_value(); }

  // Throws ShapeError / DomainError if W and b disagree or hold non-finite values.
  void validate() const;
};

struct ExactSaved {
  Matrix input;  // B x N_in
};

struct RandomizedSaved {
  Matrix projected;  // B_proj x N_in
  SketchHandle handle;
};

// What forward leaves behind for backward.
class SavedContext {
 public:
  explicit SavedContext(ExactSaved saved);
  explicit SavedContext(RandomizedSaved saved);

  std::size_t batch() const noexcept { return batch_; }
  bool is_randomized() const noexcept { return std::holds_alternative<RandomizedSaved>(saved_); }

  const ExactSaved* exact() const noexcept { return std::get_if<ExactSaved>(&saved_); }
  const RandomizedSaved* randomized() const noexcept {
    return std::get_if<RandomizedSaved>(&saved_);
  }
  // Test hook for integrity checks.
  RandomizedSaved* mutable_randomized() noexcept { return std::get_if<RandomizedSaved>(&saved_); }

  // The stored activation tensor, X or Sᵀ X.
  const Matrix& stored() const noexcept;

 private:
  std::variant<ExactSaved, RandomizedSaved> saved_;
  std::size_t batch_;
};

struct ForwardResult {
  Matrix output;  // B x N_out
  SavedContext context;
};

struct LayerGrads {
  Matrix d_input;              // B x N_in
  Matrix d_weight;             // N_out x N_in
  std::vector<double> d_bias;  // N_out
};

// `step` is the nonce that, together with layer_id, seeds a fresh sketch.
ForwardResult forward(const LinearLayer& layer, const Matrix& x, std::int64_t step);
LayerGrads backward(const LinearLayer& layer, const SavedContext& ctx, const Matrix& dy);

// dyᵀ x.
Matrix exact_weight_grad(const Matrix& x, const Matrix& dy);

// 8 bytes per stored double.
std::size_t stored_activation_bytes(const SavedContext& ctx) noexcept;
// B_proj / B for a randomized layer at batch size B.
double memory_ratio(std::size_t batch, const SketchSpec& spec);

// Checkpoint blob: "RMML", u32 N_out, u32 N_in, W row-major, b; all
// little-endian, doubles as IEEE-754 binary64.
std::vector<std::uint8_t> serialize_layer(const LinearLayer& layer);
void write_layer(std::ostream& out, const LinearLayer& layer);
// Restores W and b as an exact-mode layer; throws IntegrityError on a bad
// magic or truncated input.
LinearLayer read_layer(std::istream& in, std::int64_t layer_id = 0);
LinearLayer deserialize_layer(std::span<const std::uint8_t> bytes, std::int64_t layer_id = 0);

}  // namespace rmmb
