// Copyright 2026 The rmmb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace rmmb {

// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Counter-based generator: word i of the stream is a pure function of
// (seed, i), so the whole state is two integers and any position can be
// restored exactly. Only integer arithmetic feeds the raw stream; doubles
// are derived with IEEE basic operations plus log/cos/sqrt.
class Rng {
 public:
  static constexpr std::size_t kSerializedSize = 16;

  explicit Rng(std::uint64_t seed, std::uint64_t counter = 0) noexcept
      : seed_(seed), counter_(counter) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept {
    return mix64(seed_ ^ mix64(counter_++ ^ 0x243f6a8885a308d3ULL));
  }

  // Uniform on (0, 1], 53 bits of resolution.
  double uniform() noexcept {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  // Box–Muller, cosine branch only: every variate consumes exactly two words.
  double normal() noexcept;
  // +1 or -1, each with probability 1/2 (top bit of one word).
  double sign() noexcept { return (next_u64() >> 63) ? 1.0 : -1.0; }
  // Uniform integer in [0, n) by Lemire's multiply-shift, n > 0.
  std::uint64_t below(std::uint64_t n) noexcept;

  std::vector<double> normals(std::size_t n);
  std::vector<double> signs(std::size_t n);

  // Little-endian: seed then counter.
  std::array<std::uint8_t, kSerializedSize> serialize() const noexcept;
  // Throws std::invalid_argument on a wrong-size buffer.
  static Rng deserialize(std::span<const std::uint8_t> bytes);

  bool operator==(const Rng&) const = default;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

}  // namespace rmmb
