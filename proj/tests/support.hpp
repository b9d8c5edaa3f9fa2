// Copyright (C) 2026 The dmdlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>

#include "dmdlab/ndgrad.hpp"

namespace dmdlab::testing {

/// Central differences of f over every coordinate of at.
template <typename F>
Vector central_difference(F&& f, const ParamVector& at, double h = 1e-5) {
  Vector g(at.size());
  ParamVector p = at;
  for (Index i = 0; i < at.size(); ++i) {
    const double x = at.flat()(i);
    p.flat()(i) = x + h;
    const double up = f(p);
    p.flat()(i) = x - h;
    const double down = f(p);
    p.flat()(i) = x;
    g(i) = (up - down) / (2.0 * h);
  }
  return g;
}

inline double relative_error(const Vector& a, const Vector& b) {
  return (a - b).norm() / std::max(1e-12, std::max(a.norm(), b.norm()));
}

/// Plain value of a tape loss at a point.
template <typename LossFn>
double tape_value(LossFn&& loss_fn, const ParamVector& at) {
  Tape tape;
  const auto vars = tape.bind(at, false);
  return loss_fn(tape, std::span<const Var>(vars)).item();
}

}  // namespace dmdlab::testing
