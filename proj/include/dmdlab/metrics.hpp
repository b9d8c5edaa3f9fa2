// Copyright (C) 2026 The dmdlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "dmdlab/data.hpp"
#include "dmdlab/nets.hpp"
#include "dmdlab/samplers.hpp"
#include "dmdlab/schedules.hpp"

namespace dmdlab {

struct SampleMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;  // unbiased
};

SampleMoments sample_moments(const Matrix& x);

struct FdResult {
  double value = 0.0;
  bool regularized = false;  // a covariance was near-singular and got 1e-8 I added
};

/// Frechet distance between Gaussian fits of two sample sets (at least 32 rows each).
FdResult frechet_gaussian(const Matrix& a, const Matrix& b);
double frechet_gaussian_distance(const Matrix& a, const Matrix& b);
/// Same distance between explicit moments.
double frechet_gaussian_distance(const SampleMoments& a, const SampleMoments& b);

/// Passing this as bandwidth selects the median pairwise distance of the pooled set.
inline constexpr double kMedianHeuristic = 0.0;

/// Unbiased MMD^2 with k(x, y) = exp(-|x - y|^2 / (2 h^2)), clamped at 0.
/// A set with a single point has no unbiased within-set term; the biased
/// V-statistic is used for it instead.
double mmd_rbf(const Matrix& a, const Matrix& b, double bandwidth = kMedianHeuristic);
double mmd_rbf_unclamped(const Matrix& a, const Matrix& b, double bandwidth = kMedianHeuristic);

/// Mean of log p_kde(x) - log p_target(x) over the second half of the
/// samples, the KDE being fit on the first half. bandwidth <= 0 uses
/// Scott's rule on the full covariance.
double kl_estimate(const Matrix& model_samples, const DatasetSpec& spec, double kde_bandwidth = 0.0);

struct XiPoint {
  double t = 0.0;
  double xi = 0.0;         // normalized by the curve maximum
  double raw = 0.0;        // mean squared reconstruction error
  double raw_stderr = 0.0;
};

/// One-step reconstruction error E|x0_hat(x_t, t) - x0|^2 over t_grid.
std::vector<XiPoint> xi_profile(const VelocityField& field, const Schedule& s, const DatasetSpec& spec,
                                std::span<const double> t_grid, Index n, Rng& rng);
std::vector<XiPoint> xi_profile(const VelocityNet& net, const Schedule& s, const DatasetSpec& spec,
                                std::span<const double> t_grid, Index n, Rng& rng);

/// Anchor grid refined so each segment is split into steps / 4 equal parts.
std::vector<double> refine_anchor_grid(const CoarseGrid& anchors, int steps);

using StepDrift = std::map<std::pair<int, int>, double>;

/// Mean endpoint distance between Euler samples at each pair of step counts,
/// sharing the initial noise per seed. Labels cycle through num_conditions.
StepDrift step_consistency(const VelocityField& field, const CoarseGrid& anchors, std::span<const int> step_counts,
                           Index n, std::span<const std::uint64_t> seeds, int num_conditions = 1);

/// Mean over labels of the mean pairwise L2 distance within that label.
double pairwise_diversity(const Matrix& samples, std::span<const int> cond);

struct MetricReport {
  double fd = 0.0;
  double mmd = 0.0;
  std::optional<double> kl_est;
  std::vector<XiPoint> xi_curve;
  StepDrift step_drift;
  double diversity = 0.0;
};

}  // namespace dmdlab
