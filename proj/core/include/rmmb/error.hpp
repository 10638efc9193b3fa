// Copyright 2026 The rmmb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace rmmb {

// Operand dimensions disagree.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Input outside the domain of a formula (B < 2, zero norms, non-finite data).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A saved context no longer agrees with what backward rematerializes.
class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Training produced a non-finite value.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::string what, long step, int layer_id)
      : std::runtime_error(std::move(what)), step_(step), layer_id_(layer_id) {}

  long step() const noexcept { return step_; }
  int layer_id() const noexcept { return layer_id_; }

 private:
  long step_;
  int layer_id_;
};

}  // namespace rmmb
