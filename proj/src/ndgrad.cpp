// Copyright (C) 2026 The dmdlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmdlab/ndgrad.hpp"

#include <cmath>
#include <string>

namespace dmdlab {

namespace {

void check_finite(const Matrix& m, const char* op) {
  if (!m.allFinite()) {
    throw NumericFailure(op, std::string("non-finite value produced by primitive '") + op + "'");
  }
}

void check_same_tape(Var a, Var b, const char* op) {
  DMDLAB_REQUIRE(a.tape != nullptr && a.tape == b.tape, std::string(op) + ": operands live on different tapes");
}

bool any_grad(Tape& t, std::initializer_list<Var> vs) {
  for (auto v : vs) {
    if (t.requires_grad(v.id)) return true;
  }
  return false;
}

enum class Broadcast { kNone, kRow };

Broadcast binary_shape(Var a, Var b, const char* op, bool allow_row) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::kNone;
  if (allow_row && b.rows() == 1 && b.cols() == a.cols()) return Broadcast::kRow;
  throw ContractViolation(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                          std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                          std::to_string(b.cols()) + ")");
}

}  // namespace

const Matrix& Var::value() const { return tape->value(id); }

double Var::item() const {
  DMDLAB_REQUIRE(rows() == 1 && cols() == 1, "item() on a non-scalar tensor");
  return value()(0, 0);
}

Var Tape::record(Matrix value, const char* op, bool requires_grad, Backward backward) {
  check_finite(value, op);
  nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, op, requires_grad ? std::move(backward) : Backward()});
  return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Matrix value) { return record(std::move(value), "constant", false, {}); }

Var Tape::leaf(Matrix value) { return record(std::move(value), "leaf", true, {}); }

std::vector<Var> Tape::bind(const ParamVector& params, bool requires_grad) {
  std::vector<Var> out;
  out.reserve(params.layout().count());
  for (std::size_t i = 0; i < params.layout().count(); ++i) {
    Matrix m = params.block(i);
    out.push_back(requires_grad ? leaf(std::move(m)) : constant(std::move(m)));
  }
  return out;
}

void Tape::backward(Var root) {
  DMDLAB_REQUIRE(root.tape == this, "backward: root belongs to another tape");
  DMDLAB_REQUIRE(root.rows() == 1 && root.cols() == 1, "backward: root must be a scalar");
  if (!nodes_[root.id].requires_grad) return;
  // Only leaves accumulate across passes; interior adjoints start fresh.
  for (std::size_t i = 0; i <= root.id; ++i)
    if (nodes_[i].backward) nodes_[i].grad.resize(0, 0);
  accumulate(root.id, Matrix::Ones(1, 1));
  for (std::size_t i = root.id + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (!node.requires_grad || node.grad.size() == 0 || !node.backward) continue;
    node.backward(*this, i);
  }
}

void Tape::zero_grad() {
  for (auto& n : nodes_) n.grad.resize(0, 0);
}

Matrix Tape::grad(Var v) const {
  const auto& n = nodes_[v.id];
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

ParamVector Tape::gradient(std::span<const Var> vars, const ParamVector& like) const {
  DMDLAB_REQUIRE(vars.size() == like.layout().count(), "gradient: variable count does not match layout");
  ParamVector out(like.layout_ptr());
  for (std::size_t i = 0; i < vars.size(); ++i) {
    const auto& n = nodes_[vars[i].id];
    if (n.grad.size() != 0) out.block(i) = n.grad;
  }
  return out;
}

Var add(Var a, Var b) {
  check_same_tape(a, b, "add");
  Tape& t = *a.tape;
  const auto bc = binary_shape(a, b, "add", true);
  Matrix out = bc == Broadcast::kRow ? Matrix(a.value().rowwise() + b.value().row(0)) : Matrix(a.value() + b.value());
  return t.record(std::move(out), "add", any_grad(t, {a, b}), [a = a.id, b = b.id, bc](Tape& t, std::size_t self) {
    const Matrix& g = t.upstream(self);
    t.accumulate(a, g);
    if (bc == Broadcast::kRow) {
      t.accumulate(b, g.colwise().sum());
    } else {
      t.accumulate(b, g);
    }
  });
}

Var sub(Var a, Var b) {
  check_same_tape(a, b, "sub");
  Tape& t = *a.tape;
  const auto bc = binary_shape(a, b, "sub", true);
  Matrix out = bc == Broadcast::kRow ? Matrix(a.value().rowwise() - b.value().row(0)) : Matrix(a.value() - b.value());
  return t.record(std::move(out), "sub", any_grad(t, {a, b}), [a = a.id, b = b.id, bc](Tape& t, std::size_t self) {
    const Matrix& g = t.upstream(self);
    t.accumulate(a, g);
    if (bc == Broadcast::kRow) {
      t.accumulate(b, -g.colwise().sum());
    } else {
      t.accumulate(b, -g);
    }
  });
}

Var mul(Var a, Var b) {
  check_same_tape(a, b, "mul");
  Tape& t = *a.tape;
  binary_shape(a, b, "mul", false);
  Matrix out = a.value().cwiseProduct(b.value());
  return t.record(std::move(out), "mul", any_grad(t, {a, b}), [a = a.id, b = b.id](Tape& t, std::size_t self) {
    const Matrix& g = t.upstream(self);
    if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(t.value(b)));
    if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(t.value(a)));
  });
}

Var scale(Var a, double c) {
  Tape& t = *a.tape;
  return t.record(a.value() * c, "scale", t.requires_grad(a.id), [a = a.id, c](Tape& t, std::size_t self) {
    t.accumulate(a, t.upstream(self) * c);
  });
}

Var add_scalar(Var a, double c) {
  Tape& t = *a.tape;
  Matrix out = a.value().array() + c;
  return t.record(std::move(out), "add_scalar", t.requires_grad(a.id),
                  [a = a.id](Tape& t, std::size_t self) { t.accumulate(a, t.upstream(self)); });
}

Var matmul(Var a, Var b) {
  check_same_tape(a, b, "matmul");
  Tape& t = *a.tape;
  DMDLAB_REQUIRE(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Matrix out = a.value() * b.value();
  return t.record(std::move(out), "matmul", any_grad(t, {a, b}), [a = a.id, b = b.id](Tape& t, std::size_t self) {
    const Matrix& g = t.upstream(self);
    if (t.requires_grad(a)) t.accumulate(a, g * t.value(b).transpose());
    if (t.requires_grad(b)) t.accumulate(b, t.value(a).transpose() * g);
  });
}

Var affine(Var x, Var w, Var b) {
  check_same_tape(x, w, "affine");
  check_same_tape(x, b, "affine");
  Tape& t = *x.tape;
  DMDLAB_REQUIRE(x.cols() == w.rows(), "affine: x and W inner dimensions differ");
  DMDLAB_REQUIRE(b.rows() == 1 && b.cols() == w.cols(), "affine: bias must be 1 x out");
  Matrix out = x.value() * w.value();
  out.rowwise() += b.value().row(0);
  return t.record(std::move(out), "affine", any_grad(t, {x, w, b}),
                  [x = x.id, w = w.id, b = b.id](Tape& t, std::size_t self) {
                    const Matrix& g = t.upstream(self);
                    if (t.requires_grad(x)) t.accumulate(x, g * t.value(w).transpose());
                    if (t.requires_grad(w)) t.accumulate(w, t.value(x).transpose() * g);
                    if (t.requires_grad(b)) t.accumulate(b, g.colwise().sum());
                  });
}

Var tanh(Var a) {
  Tape& t = *a.tape;
  Matrix out = a.value().array().tanh();
  return t.record(std::move(out), "tanh", t.requires_grad(a.id), [a = a.id](Tape& t, std::size_t self) {
    const auto y = t.value(self).array();
    t.accumulate(a, (t.upstream(self).array() * (1.0 - y * y)).matrix());
  });
}

Var silu(Var a) {
  Tape& t = *a.tape;
  const auto x = a.value().array();
  Matrix out = x / (1.0 + (-x).exp());
  return t.record(std::move(out), "silu", t.requires_grad(a.id), [a = a.id](Tape& t, std::size_t self) {
    const auto x = t.value(a).array();
    const Eigen::ArrayXXd s = 1.0 / (1.0 + (-x).exp());
    t.accumulate(a, (t.upstream(self).array() * (s * (1.0 + x * (1.0 - s)))).matrix());
  });
}

Var square(Var a) {
  Tape& t = *a.tape;
  Matrix out = a.value().array().square();
  return t.record(std::move(out), "square", t.requires_grad(a.id), [a = a.id](Tape& t, std::size_t self) {
    t.accumulate(a, (2.0 * t.upstream(self).array() * t.value(a).array()).matrix());
  });
}

Var clamp_min(Var a, double lo) {
  Tape& t = *a.tape;
  Matrix out = a.value().cwiseMax(lo);
  return t.record(std::move(out), "clamp_min", t.requires_grad(a.id), [a = a.id, lo](Tape& t, std::size_t self) {
    const auto mask = (t.value(a).array() > lo).cast<double>();
    t.accumulate(a, (t.upstream(self).array() * mask).matrix());
  });
}

Var mean(Var a) {
  Tape& t = *a.tape;
  const double n = static_cast<double>(a.value().size());
  DMDLAB_REQUIRE(n > 0, "mean of an empty tensor");
  Matrix out(1, 1);
  out(0, 0) = a.value().sum() / n;
  return t.record(std::move(out), "mean", t.requires_grad(a.id), [a = a.id, n](Tape& t, std::size_t self) {
    const auto& v = t.value(a);
    t.accumulate(a, Matrix::Constant(v.rows(), v.cols(), t.upstream(self)(0, 0) / n));
  });
}

Var sum(Var a) {
  Tape& t = *a.tape;
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return t.record(std::move(out), "sum", t.requires_grad(a.id), [a = a.id](Tape& t, std::size_t self) {
    const auto& v = t.value(a);
    t.accumulate(a, Matrix::Constant(v.rows(), v.cols(), t.upstream(self)(0, 0)));
  });
}

Var row_sum(Var a) {
  Tape& t = *a.tape;
  Matrix out = a.value().rowwise().sum();
  return t.record(std::move(out), "row_sum", t.requires_grad(a.id), [a = a.id](Tape& t, std::size_t self) {
    const auto& v = t.value(a);
    Matrix g = t.upstream(self).col(0).replicate(1, v.cols());
    t.accumulate(a, g);
  });
}

Var scale_rows(Var a, const Vector& w) {
  Tape& t = *a.tape;
  DMDLAB_REQUIRE(w.size() == a.rows(), "scale_rows: weight count must equal row count");
  Matrix out = w.asDiagonal() * a.value();
  return t.record(std::move(out), "scale_rows", t.requires_grad(a.id), [a = a.id, w](Tape& t, std::size_t self) {
    t.accumulate(a, w.asDiagonal() * t.upstream(self));
  });
}

Var stop_gradient(Var a) { return a.tape->record(a.value(), "stop_gradient", false, {}); }

}  // namespace dmdlab
