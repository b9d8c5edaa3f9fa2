// Copyright (C) 2026 The dmdlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <numbers>

#include "dmdlab/errors.hpp"
#include "dmdlab/data.hpp"

using namespace dmdlab;

namespace {

DatasetSpec single_standard_normal() {
  DatasetSpec spec;
  spec.components = {MixtureComponent{}};
  spec.condition_mode = ConditionMode::kUnconditional;
  return spec;
}

double grid_integral(const DatasetSpec& spec, double lo, double hi, int n) {
  const double h = (hi - lo) / n;
  double acc = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      acc += std::exp(target_log_density(spec, {lo + (i + 0.5) * h, lo + (j + 0.5) * h}));
  return acc * h * h;
}

}  // namespace

TEST_CASE("standard normal sample mean") {
  Rng rng(1);
  const Index n = 100000;
  const Batch b = sample_batch(single_standard_normal(), n, rng);
  CHECK(b.x0.rows() == n);
  CHECK(b.x0.cols() == 2);
  for (int j = 0; j < 2; ++j) CHECK(std::abs(b.x0.col(j).mean()) < 3.0 / std::sqrt(double(n)));
  for (int c : b.cond) CHECK(c == 0);
}

TEST_CASE("label frequency of two equal components") {
  DatasetSpec spec = ring_mixture(2, 3.0, 0.5);
  Rng rng(2);
  const Index n = 20000;
  const Batch b = sample_batch(spec, n, rng);
  double ones = 0;
  for (int c : b.cond) ones += c;
  CHECK(std::abs(ones / n - 0.5) < 3.0 * std::sqrt(0.25 / n));
  // Labels match the nearer component.
  int agree = 0;
  for (Index i = 0; i < n; ++i) {
    const Eigen::Vector2d x = b.x0.row(i).transpose();
    const int nearest = (x - spec.components[0].mean).norm() < (x - spec.components[1].mean).norm() ? 0 : 1;
    agree += nearest == b.cond[i];
  }
  CHECK(agree > 0.99 * n);
}

TEST_CASE("sampling is a pure function of the seed") {
  const DatasetSpec spec = standardize(ring_mixture());
  Rng a(42), b(42);
  const Batch x = sample_batch(spec, 256, a);
  const Batch y = sample_batch(spec, 256, b);
  CHECK(x.x0 == y.x0);
  CHECK(x.cond == y.cond);
  for (const auto& s : {two_moons(), checkerboard()}) {
    Rng c(3), d(3);
    CHECK(sample_batch(s, 64, c).x0 == sample_batch(s, 64, d).x0);
  }
}

TEST_CASE("log density values") {
  CHECK(target_log_density(single_standard_normal(), {0.0, 0.0}) ==
        doctest::Approx(-std::log(2.0 * std::numbers::pi)).epsilon(1e-14));
  const DatasetSpec ring = ring_mixture();
  for (const Eigen::Vector2d& x : {Eigen::Vector2d(0.3, -1.2), Eigen::Vector2d(3.9, 0.1), Eigen::Vector2d(-2.0, 2.5)})
    CHECK(target_log_density(ring, x) == doctest::Approx(target_log_density(ring, -x)).epsilon(1e-12));
  CHECK_THROWS_AS(target_log_density(two_moons(), {0.0, 0.0}), UnsupportedOperation);
  CHECK_THROWS_AS(target_log_density(checkerboard(), {0.0, 0.0}), UnsupportedOperation);
}

TEST_CASE("densities integrate to one") {
  CHECK(std::abs(grid_integral(ring_mixture(), -7.0, 7.0, 700) - 1.0) < 1e-3);
  CHECK(std::abs(grid_integral(standardize(ring_mixture()), -3.0, 3.0, 600) - 1.0) < 1e-3);
}

TEST_CASE("standardize gives zero mean and unit scale") {
  const DatasetSpec spec = standardize(ring_mixture());
  CHECK(dataset_mean(spec).norm() < 1e-12);
  CHECK(dataset_covariance(spec).trace() / 2.0 == doctest::Approx(1.0).epsilon(1e-12));
  Rng rng(4);
  const Batch b = sample_batch(spec, 100000, rng);
  CHECK(b.x0.colwise().mean().norm() < 0.02);
  CHECK(std::abs(b.x0.array().square().sum() / (2.0 * b.x0.rows()) - 1.0) < 0.02);
}

TEST_CASE("validation") {
  DatasetSpec spec = ring_mixture(3);
  spec.components[0].weight = 0.5;
  CHECK_THROWS_AS(spec.validate(), ContractViolation);
  spec = ring_mixture(3);
  spec.components[1].cov << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(spec.validate(), ContractViolation);
  CHECK_NOTHROW(ring_mixture().validate());
  CHECK(ring_mixture().num_conditions() == 8);
  CHECK(single_standard_normal().num_conditions() == 1);
}

TEST_CASE("conditional sampling stays on its component") {
  const DatasetSpec spec = ring_mixture();
  Rng rng(5);
  const Matrix x = sample_condition(spec, 3, 5000, rng);
  const Eigen::RowVector2d m = x.colwise().mean();
  CHECK((m.transpose() - spec.components[3].mean).norm() < 0.05);
}
