// Copyright 2026 The rmmb Authors
// SPDX-License-Identifier: Apache-2.0

#include "rmmb/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace rmmb {

double Rng::normal() noexcept {
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

namespace {

// High 64 bits of a 64x64-bit product.
std::uint64_t mul_hi(std::uint64_t a, std::uint64_t b) noexcept {
  const std::uint64_t a_lo = a & 0xffffffffULL, a_hi = a >> 32;
  const std::uint64_t b_lo = b & 0xffffffffULL, b_hi = b >> 32;
  const std::uint64_t lo_lo = a_lo * b_lo;
  const std::uint64_t hi_lo = a_hi * b_lo;
  const std::uint64_t lo_hi = a_lo * b_hi;
  const std::uint64_t cross = (lo_lo >> 32) + (hi_lo & 0xffffffffULL) + lo_hi;
  return a_hi * b_hi + (hi_lo >> 32) + (cross >> 32);
}

}  // namespace

std::uint64_t Rng::below(std::uint64_t n) noexcept { return mul_hi(next_u64(), n); }

std::vector<double> Rng::normals(std::size_t n) {
  std::vector<double> out(n);
  for (double& v : out) v = normal();
  return out;
}

std::vector<double> Rng::signs(std::size_t n) {
  std::vector<double> out(n);
  for (double& v : out) v = sign();
  return out;
}

std::array<std::uint8_t, Rng::kSerializedSize> Rng::serialize() const noexcept {
  std::array<std::uint8_t, kSerializedSize> out{};
  for (int i = 0; i < 8; ++i) {
    out[i] = static_cast<std::uint8_t>(seed_ >> (8 * i));
    out[8 + i] = static_cast<std::uint8_t>(counter_ >> (8 * i));
  }
  return out;
}

Rng Rng::deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() != kSerializedSize) {
    throw std::invalid_argument("Rng::deserialize: expected 16 bytes, got " +
                                std::to_string(bytes.size()));
  }
  std::uint64_t seed = 0;
  std::uint64_t counter = 0;
  for (int i = 0; i < 8; ++i) {
    seed |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    counter |= static_cast<std::uint64_t>(bytes[8 + i]) << (8 * i);
  }
  return Rng(seed, counter);
}

}  // namespace rmmb
