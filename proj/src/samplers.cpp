// Copyright (C) 2026 The dmdlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmdlab/samplers.hpp"

#include <cmath>
#include <string>

#include "dmdlab/errors.hpp"

namespace dmdlab {

CoarseGrid::CoarseGrid(std::array<double, 4> anchors) : anchors_(anchors) {
  DMDLAB_REQUIRE(anchors_[3] == 1.0, "CoarseGrid: highest anchor must be exactly 1");
  DMDLAB_REQUIRE(anchors_[0] > 0.0, "CoarseGrid: anchors must be positive");
  for (std::size_t i = 1; i < anchors_.size(); ++i) {
    DMDLAB_REQUIRE(anchors_[i] > anchors_[i - 1], "CoarseGrid: anchors must be strictly increasing");
  }
}

double shift_time(double t, double shift) {
  DMDLAB_REQUIRE(shift > 0.0, "time shift must be positive");
  return shift * t / (1.0 + (shift - 1.0) * t);
}

CoarseGrid CoarseGrid::uniform(double shift) {
  std::array<double, 4> a{0.25, 0.5, 0.75, 1.0};
  for (std::size_t i = 0; i < 3; ++i) a[i] = shift_time(a[i], shift);
  return CoarseGrid(a);
}

std::size_t CoarseGrid::index_of(double tau) const {
  for (std::size_t i = 0; i < anchors_.size(); ++i) {
    if (anchors_[i] == tau) return i;
  }
  throw ContractViolation("time " + std::to_string(tau) + " is not an anchor");
}

std::vector<double> uniform_grid(int steps) {
  DMDLAB_REQUIRE(steps >= 1, "uniform_grid: need at least one step");
  std::vector<double> g(static_cast<std::size_t>(steps) + 1);
  for (int i = 0; i <= steps; ++i) g[static_cast<std::size_t>(i)] = 1.0 - static_cast<double>(i) / steps;
  g.back() = 0.0;
  return g;
}

Matrix euler_sample(const VelocityField& field, std::span<const double> grid, const Matrix& z,
                    std::span<const int> cond) {
  DMDLAB_REQUIRE(grid.size() >= 2, "euler_sample: grid needs at least two times");
  DMDLAB_REQUIRE(grid.front() == 1.0 && grid.back() == 0.0, "euler_sample: grid must run from 1 to 0");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    DMDLAB_REQUIRE(grid[i] < grid[i - 1], "euler_sample: grid must be strictly decreasing");
  }
  Matrix x = z;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) x = generator_step(field, x, grid[i], grid[i + 1], cond);
  return x;
}

namespace {

// Walks anchors from tau_3 down to index stop (inclusive). Returns the noisy
// state at stop when want_state, else the x0 prediction made there.
Matrix anchor_walk(const VelocityField& field, const Schedule& s, const CoarseGrid& grid, const Matrix& z,
                   std::size_t stop, bool want_state, std::span<const int> cond, Rng& rng, double noise_scale) {
  Matrix x = z;
  for (std::size_t i = grid.size() - 1;; --i) {
    if (i == stop && want_state) return x;
    const double tau = grid[i];
    const Matrix v = field(x, Vector::Constant(x.rows(), tau), cond);
    Matrix x0 = velocity_to_x0(s, x, tau, v);
    if (i == stop) return x0;
    const double next = grid[i - 1];
    Matrix noise = standard_normal(rng, x.rows(), x.cols());
    if (noise_scale != 1.0) noise *= noise_scale;
    x = forward_diffuse(s, x0, next, noise);
  }
}

}  // namespace

Matrix stochastic_anchor_sample(const VelocityField& field, const Schedule& s, const CoarseGrid& grid,
                                const Matrix& z, std::span<const int> cond, Rng& rng, double noise_scale) {
  return anchor_walk(field, s, grid, z, 0, false, cond, rng, noise_scale);
}

Matrix backward_simulate(const VelocityField& field, const Schedule& s, const CoarseGrid& grid, const Matrix& z,
                         double tau_target, std::span<const int> cond, Rng& rng) {
  const std::size_t stop = grid.index_of(tau_target);
  return anchor_walk(field, s, grid, z, stop, true, cond, rng, 1.0);
}

}  // namespace dmdlab
