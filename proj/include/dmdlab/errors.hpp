// Copyright (C) 2026 The dmdlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace dmdlab {

/// A caller broke a documented precondition (shape, range, layout).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A computation produced NaN/Inf or diverged.
class NumericFailure : public std::runtime_error {
 public:
  NumericFailure(std::string where, const std::string& what)
      : std::runtime_error(where.empty() ? what : where + ": " + what), where_(std::move(where)) {}
  explicit NumericFailure(const std::string& what) : NumericFailure("", what) {}

  /// Name of the primitive or loss component that failed.
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

/// The operation is not defined for this configuration (e.g. DDPM inversion).
class UnsupportedOperation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed or inconsistent experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define DMDLAB_REQUIRE(cond, msg)                                   \
  do {                                                              \
    if (!(cond)) throw ::dmdlab::ContractViolation(std::string(msg)); \
  } while (0)

}  // namespace dmdlab
