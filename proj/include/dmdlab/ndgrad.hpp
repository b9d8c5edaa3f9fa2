// Copyright (C) 2026 The dmdlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Minimal reverse-mode differentiation over dense rank-2 tensors.
//
// A Tape records every primitive applied to its variables; backward() walks
// the record in reverse creation order. Tapes are single-threaded and share
// no state with each other, so independent tapes may live on different
// threads. Gradients accumulate across backward() calls until zero_grad().

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "dmdlab/errors.hpp"
#include "dmdlab/params.hpp"

namespace dmdlab {

/// Tensor values are plain Eigen matrices (rank <= 2). Vectors are stored as
/// N x 1 or 1 x N; scalars as 1 x 1.
using Tensor = Matrix;

class Tape;

/// Handle to a node on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  /// Value of a 1 x 1 node.
  double item() const;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var leaf(Matrix value);

  /// One node per layout slot, in layout order.
  std::vector<Var> bind(const ParamVector& params, bool requires_grad = true);

  /// Seeds d(root)/d(root) = 1 and propagates. root must be 1 x 1.
  void backward(Var root);
  void zero_grad();

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Accumulated gradient; a zero matrix of matching shape when nothing flowed.
  Matrix grad(Var v) const;
  /// Gathers the gradients of bound parameter nodes into a ParamVector.
  ParamVector gradient(std::span<const Var> vars, const ParamVector& like) const;

  std::size_t size() const { return nodes_.size(); }

  // Used by primitives.
  Var record(Matrix value, const char* op, bool requires_grad, Backward backward);
  const Matrix& upstream(std::size_t id) const { return nodes_[id].grad; }
  template <typename Expr>
  void accumulate(std::size_t id, const Expr& g) {
    auto& node = nodes_[id];
    if (!node.requires_grad) return;
    if (node.grad.size() == 0) {
      node.grad = g;
    } else {
      node.grad += g;
    }
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    const char* op = "";
    Backward backward;
  };
  std::vector<Node> nodes_;
};

// Primitives. Binary ops require identical shapes, except add/sub which also
// accept a 1 x n right operand broadcast over rows.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var matmul(Var a, Var b);
/// x * W + b with b a 1 x n row broadcast.
Var affine(Var x, Var w, Var b);
Var tanh(Var a);
Var silu(Var a);
Var square(Var a);
Var clamp_min(Var a, double lo);
/// Mean over all entries, 1 x 1.
Var mean(Var a);
/// Sum over all entries, 1 x 1.
Var sum(Var a);
/// Sum over columns, rows x 1.
Var row_sum(Var a);
/// Multiplies row i of a by the constant w(i).
Var scale_rows(Var a, const Vector& w);
/// Identity forward, zero backward.
Var stop_gradient(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(Var a, double c) { return scale(a, c); }
inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator+(Var a, double c) { return add_scalar(a, c); }
inline Var operator-(Var a, double c) { return add_scalar(a, -c); }
inline Var operator-(double c, Var a) { return add_scalar(scale(a, -1.0), c); }
inline Var operator-(Var a) { return scale(a, -1.0); }

/// Exact reverse-mode gradient of a scalar loss built on a fresh tape.
/// loss_fn(Tape&, std::span<const Var> params) -> Var (1 x 1).
template <typename LossFn>
std::pair<double, ParamVector> value_and_grad(LossFn&& loss_fn, const ParamVector& at) {
  DMDLAB_REQUIRE(at.flat().allFinite(), "grad: evaluation point is not finite");
  Tape tape;
  const auto vars = tape.bind(at, true);
  Var loss = loss_fn(tape, std::span<const Var>(vars));
  DMDLAB_REQUIRE(loss.rows() == 1 && loss.cols() == 1, "grad: loss must be scalar");
  tape.backward(loss);
  return {loss.item(), tape.gradient(vars, at)};
}

template <typename LossFn>
ParamVector grad(LossFn&& loss_fn, const ParamVector& at) {
  return value_and_grad(std::forward<LossFn>(loss_fn), at).second;
}

}  // namespace dmdlab
