// Copyright (C) 2026 The dmdlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <span>
#include <vector>

#include "dmdlab/nets.hpp"
#include "dmdlab/schedules.hpp"

namespace dmdlab {

/// Four anchor times tau_0 < tau_1 < tau_2 < tau_3 = 1.
class CoarseGrid {
 public:
  CoarseGrid() = default;
  explicit CoarseGrid(std::array<double, 4> anchors);

  /// Anchors {0.25, 0.5, 0.75, 1}, optionally remapped by the monotone
  /// time shift t -> shift t / (1 + (shift - 1) t).
  static CoarseGrid uniform(double shift = 1.0);

  double operator[](std::size_t i) const { return anchors_[i]; }
  const std::array<double, 4>& anchors() const { return anchors_; }
  static constexpr std::size_t size() { return 4; }
  /// Index of an anchor value; throws ContractViolation when absent.
  std::size_t index_of(double tau) const;
  /// Lower end of the segment below anchor i (0 for i = 0).
  double lower(std::size_t i) const { return i == 0 ? 0.0 : anchors_[i - 1]; }

 private:
  std::array<double, 4> anchors_{0.25, 0.5, 0.75, 1.0};
};

double shift_time(double t, double shift);

/// Uniform grid 1 = g_0 > ... > g_n = 0.
std::vector<double> uniform_grid(int steps);

/// Iterated Euler steps along a grid that starts at 1 and ends at 0.
Matrix euler_sample(const VelocityField& field, std::span<const double> grid, const Matrix& z,
                    std::span<const int> cond);

/// x0-prediction then re-noise at each anchor, from tau_3 down to tau_0.
/// noise_scale = 0 gives the deterministic anchor sampler.
Matrix stochastic_anchor_sample(const VelocityField& field, const Schedule& s, const CoarseGrid& grid,
                                const Matrix& z, std::span<const int> cond, Rng& rng, double noise_scale = 1.0);

/// Runs the anchor sampler from tau_3 and returns the noisy state at tau_target.
Matrix backward_simulate(const VelocityField& field, const Schedule& s, const CoarseGrid& grid, const Matrix& z,
                         double tau_target, std::span<const int> cond, Rng& rng);

}  // namespace dmdlab
