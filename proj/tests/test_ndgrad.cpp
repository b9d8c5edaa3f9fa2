// Copyright (C) 2026 The dmdlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>

#include "dmdlab/errors.hpp"
#include "dmdlab/ndgrad.hpp"
#include "dmdlab/random.hpp"
#include "support.hpp"

using namespace dmdlab;
using dmdlab::testing::central_difference;
using dmdlab::testing::relative_error;
using dmdlab::testing::tape_value;

namespace {

std::shared_ptr<const ParamLayout> layout_of(std::initializer_list<std::tuple<const char*, Index, Index>> slots) {
  auto l = std::make_shared<ParamLayout>();
  for (const auto& [n, r, c] : slots) l->add(n, r, c);
  return l;
}

ParamVector random_params(std::shared_ptr<const ParamLayout> layout, Rng& rng) {
  ParamVector p(std::move(layout));
  p.flat() = standard_normal(rng, p.size(), 1);
  return p;
}

}  // namespace

TEST_CASE("grad of x*x at 3 is 6") {
  const auto layout = layout_of({{"x", 1, 1}});
  ParamVector at(layout, Vector::Constant(1, 3.0));
  auto g = grad([](Tape&, std::span<const Var> p) { return sum(p[0] * p[0]); }, at);
  CHECK(g.flat()(0) == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("grad of x*y at (2,5) is (5,2)") {
  const auto layout = layout_of({{"x", 1, 1}, {"y", 1, 1}});
  Vector v(2);
  v << 2.0, 5.0;
  ParamVector at(layout, v);
  auto [value, g] = value_and_grad([](Tape&, std::span<const Var> p) { return sum(p[0] * p[1]); }, at);
  CHECK(value == 10.0);
  CHECK(g.flat()(0) == 5.0);
  CHECK(g.flat()(1) == 2.0);
}

TEST_CASE("two-layer network gradient matches central differences") {
  Rng rng(7);
  const auto layout = layout_of({{"w1", 3, 16}, {"b1", 1, 16}, {"w2", 16, 2}, {"b2", 1, 2}});
  const ParamVector at = random_params(layout, rng);
  const Matrix x = standard_normal(rng, 10, 3);
  const Matrix y = standard_normal(rng, 10, 2);
  auto loss = [&](Tape& tape, std::span<const Var> p) {
    Var xv = tape.constant(x);
    Var h = silu(affine(xv, p[0], p[1]));
    Var out = affine(h, p[2], p[3]);
    return mean(square(out - tape.constant(y)));
  };
  const ParamVector g = grad(loss, at);
  const Vector fd = central_difference([&](const ParamVector& p) { return tape_value(loss, p); }, at);
  CHECK(relative_error(g.flat(), fd) < 1e-4);
}

TEST_CASE("every primitive agrees with central differences") {
  Rng rng(11);
  const auto layout = layout_of({{"a", 4, 3}, {"b", 4, 3}, {"w", 3, 5}, {"r", 1, 3}});
  const ParamVector at = random_params(layout, rng);
  const Vector rw = standard_normal(rng, 4, 1);

  auto check = [&](const char* name, auto&& loss) {
    INFO(name);
    const ParamVector g = grad(loss, at);
    const Vector fd = central_difference([&](const ParamVector& p) { return tape_value(loss, p); }, at);
    CHECK(relative_error(g.flat(), fd) < 1e-4);
  };

  // Each loss reduces with a weighted sum so the upstream gradient is not uniform.
  const Matrix wsum = standard_normal(rng, 4, 5);
  auto reduce = [&](Tape& tape, Var v) {
    return sum(v * tape.constant(wsum.topLeftCorner(v.rows(), v.cols())));
  };

  check("add", [&](Tape& t, std::span<const Var> p) { return reduce(t, p[0] + p[1]); });
  check("sub", [&](Tape& t, std::span<const Var> p) { return reduce(t, p[0] - p[1]); });
  check("broadcast add", [&](Tape& t, std::span<const Var> p) { return reduce(t, p[0] + p[3]); });
  check("broadcast sub", [&](Tape& t, std::span<const Var> p) { return reduce(t, p[0] - p[3]); });
  check("mul", [&](Tape& t, std::span<const Var> p) { return reduce(t, p[0] * p[1]); });
  check("scale", [&](Tape& t, std::span<const Var> p) { return reduce(t, 2.5 * p[0] + 1.0); });
  check("matmul", [&](Tape& t, std::span<const Var> p) { return reduce(t, matmul(p[0], p[2])); });
  check("affine", [&](Tape& t, std::span<const Var> p) {
    return reduce(t, affine(p[0], p[2], t.constant(Matrix::Ones(1, 5))));
  });
  check("tanh", [&](Tape& t, std::span<const Var> p) { return reduce(t, tanh(p[0])); });
  check("silu", [&](Tape& t, std::span<const Var> p) { return reduce(t, silu(p[1])); });
  check("square", [&](Tape& t, std::span<const Var> p) { return reduce(t, square(p[0])); });
  check("clamp_min", [&](Tape& t, std::span<const Var> p) { return reduce(t, clamp_min(p[0], 0.1)); });
  check("mean", [&](Tape&, std::span<const Var> p) { return mean(p[0] * p[1]); });
  check("row_sum", [&](Tape& t, std::span<const Var> p) { return reduce(t, row_sum(p[0] * p[1])); });
  check("scale_rows", [&](Tape& t, std::span<const Var> p) { return reduce(t, scale_rows(p[0], rw)); });
  check("composite", [&](Tape& t, std::span<const Var> p) {
    Var h = tanh(matmul(p[0] * p[1], p[2]));
    return mean(square(h)) + sum(clamp_min(1.0 - p[0], 0.0)) * 0.1;
  });
}

TEST_CASE("stop_gradient blocks the backward pass") {
  const auto layout = layout_of({{"x", 1, 1}});
  ParamVector at(layout, Vector::Constant(1, 2.0));
  auto g = grad([](Tape&, std::span<const Var> p) { return sum(p[0] * stop_gradient(p[0])); }, at);
  // d/dx [x * sg(x)] = sg(x) = 2
  CHECK(g.flat()(0) == 2.0);
  auto g0 = grad([](Tape&, std::span<const Var> p) { return sum(square(stop_gradient(p[0]))); }, at);
  CHECK(g0.flat()(0) == 0.0);
}

TEST_CASE("gradients accumulate until zero_grad") {
  Tape tape;
  Var x = tape.leaf(Matrix::Constant(1, 1, 3.0));
  Var y = square(x);
  tape.backward(y);
  CHECK(tape.grad(x)(0, 0) == 6.0);
  tape.backward(y);
  CHECK(tape.grad(x)(0, 0) == 12.0);
  tape.zero_grad();
  CHECK(tape.grad(x)(0, 0) == 0.0);
}

TEST_CASE("non-scalar loss is a contract violation") {
  const auto layout = layout_of({{"x", 2, 1}});
  ParamVector at(layout, Vector::Ones(2));
  CHECK_THROWS_AS(grad([](Tape&, std::span<const Var> p) { return p[0] * p[0]; }, at), ContractViolation);
}

TEST_CASE("non-finite forward value names the primitive") {
  const auto layout = layout_of({{"x", 1, 1}});
  ParamVector at(layout, Vector::Constant(1, 1e200));
  try {
    grad([](Tape&, std::span<const Var> p) { return sum(square(p[0])); }, at);
    FAIL("expected NumericFailure");
  } catch (const NumericFailure& e) {
    CHECK(e.where() == "square");
  }
  ParamVector nan_at(layout, Vector::Constant(1, std::numeric_limits<double>::quiet_NaN()));
  CHECK_THROWS_AS(grad([](Tape&, std::span<const Var> p) { return sum(p[0]); }, nan_at), ContractViolation);
}

TEST_CASE("shape errors are contract violations") {
  Tape tape;
  Var a = tape.leaf(Matrix::Ones(2, 3));
  Var b = tape.leaf(Matrix::Ones(3, 2));
  CHECK_THROWS_AS(add(a, b), ContractViolation);
  CHECK_THROWS_AS(matmul(a, a), ContractViolation);
  Tape other;
  Var c = other.leaf(Matrix::Ones(2, 3));
  CHECK_THROWS_AS(add(a, c), ContractViolation);
}

TEST_CASE("param_distance") {
  const auto layout = layout_of({{"v", 2, 1}});
  ParamVector a(layout, Vector::Zero(2));
  Vector bv(2);
  bv << 3.0, 4.0;
  ParamVector b(layout, bv);
  CHECK(param_distance(a, a) == 0.0);
  CHECK(param_distance(a, b) == 5.0);

  Rng rng(3);
  const auto big = layout_of({{"w", 10, 10}});
  const ParamVector p = random_params(big, rng);
  const ParamVector q = random_params(big, rng);
  double acc = 0.0;
  for (Index i = 0; i < p.size(); ++i) {
    const double d = p.flat()(i) - q.flat()(i);
    acc += d * d;
  }
  CHECK(param_distance(p, q) == doctest::Approx(std::sqrt(acc)).epsilon(1e-14));

  ParamVector other(layout_of({{"u", 2, 1}}), Vector::Zero(2));
  CHECK_THROWS_AS(param_distance(a, other), ContractViolation);
}

TEST_CASE("blend_params endpoints and arithmetic") {
  const auto layout = layout_of({{"v", 1, 1}});
  ParamVector target(layout, Vector::Constant(1, 1.0));
  ParamVector source(layout, Vector::Constant(1, 0.0));
  CHECK(blend_params(target, source, 1.0).flat()(0) == 1.0);
  CHECK(blend_params(target, source, 0.9).flat()(0) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(std::abs(blend_params(target, source, 1e-12).flat()(0) - 0.0) < 1e-9);
  CHECK_THROWS_AS(blend_params(target, source, 0.0), ContractViolation);
  CHECK_THROWS_AS(blend_params(target, source, 1.5), ContractViolation);
}

TEST_CASE("blend_params contracts toward source by exactly lambda") {
  Rng rng(5);
  const auto layout = layout_of({{"w", 7, 9}, {"b", 1, 9}});
  for (int trial = 0; trial < 20; ++trial) {
    const ParamVector a = random_params(layout, rng);
    const ParamVector b = random_params(layout, rng);
    const double lambda = uniform(rng, 1e-3, 1.0);
    const double lhs = param_distance(blend_params(a, b, lambda), b);
    CHECK(std::abs(lhs - lambda * param_distance(a, b)) < 1e-12 * std::max(1.0, lhs));
  }
}

TEST_CASE("flatten and unflatten round-trip bit-exactly") {
  Rng rng(9);
  const auto layout = layout_of({{"w", 5, 4}, {"b", 1, 4}, {"e", 3, 2}});
  const ParamVector p = random_params(layout, rng);
  const auto tensors = p.unflatten();
  const ParamVector q = ParamVector::flatten(layout, tensors);
  CHECK(std::memcmp(p.flat().data(), q.flat().data(), sizeof(double) * p.size()) == 0);
  CHECK(p.same_layout(q));
  CHECK(tensors[1].rows() == 1);
  CHECK(tensors[1].cols() == 4);
}
