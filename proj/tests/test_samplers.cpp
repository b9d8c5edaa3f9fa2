// Copyright (C) 2026 The dmdlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "dmdlab/errors.hpp"
#include "dmdlab/data.hpp"
#include "dmdlab/gaussian.hpp"
#include "dmdlab/metrics.hpp"
#include "dmdlab/samplers.hpp"

using namespace dmdlab;

namespace {

// Exact conditional-expectation velocity for Gaussian data.
VelocityField exact_field(const Gaussian2d& g) {
  return [g](const Matrix& x, const Vector& t, std::span<const int>) {
    Matrix v(x.rows(), 2);
    for (Index i = 0; i < x.rows(); ++i) {
      const auto f = gaussian_target_field(g, t(i));
      v.row(i) = f(x.row(i).transpose()).transpose();
    }
    return v;
  };
}

VelocityField constant_field(Eigen::RowVector2d c) {
  return [c](const Matrix& x, const Vector&, std::span<const int>) {
    Matrix v(x.rows(), 2);
    v.rowwise() = c;
    return v;
  };
}

// One component of the standardized benchmark mixture.
Gaussian2d benchmark_component() {
  const DatasetSpec spec = standardize(ring_mixture());
  return {spec.components[0].mean, spec.components[0].cov};
}

Matrix gaussian_draws(const Gaussian2d& g, Index n, Rng& rng) {
  const Eigen::Matrix2d L = g.cov.llt().matrixL();
  Matrix x = standard_normal(rng, n, 2) * L.transpose();
  x.rowwise() += g.mean.transpose();
  return x;
}

// Permutation p-value of the unbiased MMD statistic.
double mmd_permutation_p(const Matrix& a, const Matrix& b, double bandwidth, int perms, Rng& rng) {
  const double stat = mmd_rbf_unclamped(a, b, bandwidth);
  Matrix all(a.rows() + b.rows(), a.cols());
  all << a, b;
  std::vector<Index> idx(static_cast<std::size_t>(all.rows()));
  std::iota(idx.begin(), idx.end(), Index{0});
  int ge = 0;
  for (int p = 0; p < perms; ++p) {
    std::shuffle(idx.begin(), idx.end(), rng);
    Matrix x(a.rows(), a.cols()), y(b.rows(), b.cols());
    for (Index i = 0; i < a.rows(); ++i) x.row(i) = all.row(idx[std::size_t(i)]);
    for (Index i = 0; i < b.rows(); ++i) y.row(i) = all.row(idx[std::size_t(a.rows() + i)]);
    ge += mmd_rbf_unclamped(x, y, bandwidth) >= stat;
  }
  return (ge + 1.0) / (perms + 1.0);
}

}  // namespace

TEST_CASE("coarse grid") {
  const CoarseGrid g;
  CHECK(g[0] == 0.25);
  CHECK(g[3] == 1.0);
  CHECK(g.index_of(0.5) == 1);
  CHECK_THROWS_AS(g.index_of(0.6), ContractViolation);
  CHECK_THROWS_AS(CoarseGrid({0.25, 0.5, 0.75, 0.9}), ContractViolation);
  CHECK_THROWS_AS(CoarseGrid({0.5, 0.25, 0.75, 1.0}), ContractViolation);
  CHECK_THROWS_AS(CoarseGrid({0.0, 0.25, 0.75, 1.0}), ContractViolation);
  const CoarseGrid shifted = CoarseGrid::uniform(3.0);
  CHECK(shifted[3] == 1.0);
  for (std::size_t i = 0; i < 4; ++i) CHECK(shifted[i] >= g[i]);
}

TEST_CASE("euler_sample with a constant field") {
  Rng rng(1);
  const Matrix z = standard_normal(rng, 6, 2);
  const std::vector<int> cond(6, 0);
  const Eigen::RowVector2d c(0.4, -1.1);
  const std::vector<double> one{1.0, 0.0};
  const std::vector<double> two{1.0, 0.5, 0.0};
  Matrix expect = z;
  expect.rowwise() -= c;
  CHECK((euler_sample(constant_field(c), one, z, cond) - expect).cwiseAbs().maxCoeff() < 1e-15);
  CHECK((euler_sample(constant_field(c), two, z, cond) - expect).cwiseAbs().maxCoeff() < 1e-15);
  const std::vector<double> bad_end{1.0, 0.5};
  const std::vector<double> bad_order{1.0, 0.5, 0.6, 0.0};
  CHECK_THROWS_AS(euler_sample(constant_field(c), bad_end, z, cond), ContractViolation);
  CHECK_THROWS_AS(euler_sample(constant_field(c), bad_order, z, cond), ContractViolation);
}

TEST_CASE("euler_sample endpoint law on a Gaussian world") {
  // The exact field transports N(0, I) at t = 1 onto N(m, S) at t = 0.
  const Gaussian2d g{{1.0, -0.5}, (Eigen::Matrix2d() << 0.8, 0.3, 0.3, 0.5).finished()};
  Rng rng(2);
  const Index n = 20000;
  const std::vector<int> cond(n, 0);
  const Matrix x = euler_sample(exact_field(g), uniform_grid(400), standard_normal(rng, n, 2), cond);
  const SampleMoments m = sample_moments(x);
  for (int j = 0; j < 2; ++j) CHECK(std::abs(m.mean(j) - g.mean(j)) < 4.0 * std::sqrt(g.cov(j, j) / n));
  CHECK((m.cov - g.cov).cwiseAbs().maxCoeff() < 0.03);
}

TEST_CASE("Euler refinement drift matches the closed-form truncation") {
  // v(x, t) = a x: n Euler steps from 1 to 0 multiply by (1 - a/n)^n.
  const double a = 0.8;
  VelocityField lin = [a](const Matrix& x, const Vector&, std::span<const int>) { return Matrix(a * x); };
  Rng rng(3);
  const Matrix z = standard_normal(rng, 256, 2);
  const std::vector<int> cond(256, 0);
  const Matrix x4 = euler_sample(lin, uniform_grid(4), z, cond);
  const Matrix x16 = euler_sample(lin, uniform_grid(16), z, cond);
  const double measured = (x4 - x16).rowwise().norm().mean();
  const double closed = std::abs(std::pow(1.0 - a / 4, 4) - std::pow(1.0 - a / 16, 16)) * z.rowwise().norm().mean();
  CHECK(std::abs(measured - closed) <= 0.1 * closed);
  // First-order: the gap shrinks with the segment length.
  const double d_16_64 = (x16 - euler_sample(lin, uniform_grid(64), z, cond)).rowwise().norm().mean();
  CHECK(d_16_64 < 0.5 * measured);
}

TEST_CASE("stochastic anchor sampler on a benchmark component") {
  const Gaussian2d g = benchmark_component();
  const Schedule s = Schedule::fmot();
  Rng rng(4);
  const Index n = 10000;
  const std::vector<int> cond(n, 0);
  const Matrix out = stochastic_anchor_sample(exact_field(g), s, CoarseGrid{}, standard_normal(rng, n, 2), cond, rng);
  CHECK(frechet_gaussian_distance(out, gaussian_draws(g, n, rng)) < 0.05);
}

TEST_CASE("anchor sampler bias grows with data variance") {
  // x0 predictions are posterior means, so each re-noise shrinks the spread.
  // Pinned here as a known property of the scheme.
  const Gaussian2d wide{{1.0, -0.5}, Eigen::Matrix2d::Identity()};
  const Schedule s = Schedule::fmot();
  Rng rng(5);
  const Index n = 10000;
  const std::vector<int> cond(n, 0);
  const Matrix out =
      stochastic_anchor_sample(exact_field(wide), s, CoarseGrid{}, standard_normal(rng, n, 2), cond, rng);
  const SampleMoments m = sample_moments(out);
  CHECK(m.cov.trace() < 0.8 * wide.cov.trace());
}

TEST_CASE("zero-noise anchor sampler equals its deterministic reduction") {
  Rng rng(6);
  const Gaussian2d g{{0.5, 0.5}, Eigen::Matrix2d::Identity() * 0.2};
  const auto field = exact_field(g);
  const Schedule s = Schedule::fmot();
  const CoarseGrid grid;
  const Matrix z = standard_normal(rng, 32, 2);
  const std::vector<int> cond(32, 0);
  Matrix x = z;
  for (int i = 3; i >= 0; --i) {
    const double tau = grid[std::size_t(i)];
    const Matrix x0 = x - tau * field(x, Vector::Constant(32, tau), cond);
    x = i == 0 ? x0 : Matrix((1.0 - grid[std::size_t(i - 1)]) * x0);
  }
  Rng unused(0);
  CHECK((stochastic_anchor_sample(field, s, grid, z, cond, unused, 0.0) - x).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("samplers are deterministic under a fixed seed") {
  const auto field = exact_field(benchmark_component());
  const Schedule s = Schedule::fmot();
  Rng zr(7);
  const Matrix z = standard_normal(zr, 64, 2);
  const std::vector<int> cond(64, 0);
  Rng a(8), b(8);
  CHECK(stochastic_anchor_sample(field, s, CoarseGrid{}, z, cond, a) ==
        stochastic_anchor_sample(field, s, CoarseGrid{}, z, cond, b));
  Rng c(9), d(9);
  CHECK(backward_simulate(field, s, CoarseGrid{}, z, 0.5, cond, c) ==
        backward_simulate(field, s, CoarseGrid{}, z, 0.5, cond, d));
}

TEST_CASE("backward_simulate") {
  const Gaussian2d g = benchmark_component();
  const auto field = exact_field(g);
  const Schedule s = Schedule::fmot();
  Rng rng(10);
  const Matrix z = standard_normal(rng, 1000, 2);
  const std::vector<int> cond(1000, 0);
  CHECK(backward_simulate(field, s, CoarseGrid{}, z, 1.0, cond, rng) == z);
  CHECK_THROWS_AS(backward_simulate(field, s, CoarseGrid{}, z, 0.3, cond, rng), ContractViolation);

  const Matrix sim = backward_simulate(field, s, CoarseGrid{}, z, 0.25, cond, rng);
  const Matrix fwd = forward_diffuse(s, gaussian_draws(g, 1000, rng), 0.25, standard_normal(rng, 1000, 2));
  CHECK(mmd_permutation_p(sim, fwd, 1.0, 200, rng) > 0.01);
}

TEST_CASE("network evaluation times stay inside [t_min, 1]") {
  std::vector<double> seen;
  VelocityField spy = [&](const Matrix& x, const Vector& t, std::span<const int>) {
    for (Index i = 0; i < t.size(); ++i) seen.push_back(t(i));
    return Matrix(Matrix::Zero(x.rows(), x.cols()));
  };
  const Schedule s = Schedule::fmot();
  Rng rng(11);
  const Matrix z = standard_normal(rng, 4, 2);
  const std::vector<int> cond(4, 0);
  euler_sample(spy, uniform_grid(16), z, cond);
  stochastic_anchor_sample(spy, s, CoarseGrid{}, z, cond, rng);
  backward_simulate(spy, s, CoarseGrid{}, z, 0.25, cond, rng);
  CHECK(!seen.empty());
  CHECK(*std::min_element(seen.begin(), seen.end()) >= s.t_min);
  CHECK(*std::max_element(seen.begin(), seen.end()) <= 1.0);
}
