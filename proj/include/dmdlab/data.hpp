// Copyright (C) 2026 The dmdlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dmdlab/params.hpp"
#include "dmdlab/random.hpp"

namespace dmdlab {

enum class DataFamily { kGaussianMixture, kTwoMoons, kCheckerboard };
enum class ConditionMode { kUnconditional, kComponentLabel };

struct MixtureComponent {
  double weight = 1.0;
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Matrix2d cov = Eigen::Matrix2d::Identity();
};

/// Synthetic 2D target distribution. Samples are mapped through
/// x -> (x - offset) / scale after drawing; for mixtures standardize()
/// folds the map into the components so densities stay exact.
struct DatasetSpec {
  DataFamily family = DataFamily::kGaussianMixture;
  std::vector<MixtureComponent> components;
  ConditionMode condition_mode = ConditionMode::kComponentLabel;
  double noise = 0.1;  // two-moons jitter
  Eigen::Vector2d offset = Eigen::Vector2d::Zero();
  double scale = 1.0;

  /// Number of distinct condition labels (1 when unconditional).
  int num_conditions() const;
  /// Weights positive summing to 1, covariances SPD. Throws ContractViolation.
  void validate() const;
};

/// n equal-weight isotropic components on a circle.
DatasetSpec ring_mixture(int n_components = 8, double radius = 4.0, double std = 0.3,
                         ConditionMode mode = ConditionMode::kComponentLabel);
DatasetSpec two_moons(double noise = 0.1, ConditionMode mode = ConditionMode::kComponentLabel);
DatasetSpec checkerboard(ConditionMode mode = ConditionMode::kUnconditional);

/// Zero mean and unit per-coordinate scale sqrt(tr(Cov)/2).
DatasetSpec standardize(const DatasetSpec& spec);

struct Batch {
  Matrix x0;              // n x 2
  std::vector<int> cond;  // n labels
};

Batch sample_batch(const DatasetSpec& spec, Index n, Rng& rng);
/// Draws n points from the given condition label.
Matrix sample_condition(const DatasetSpec& spec, int cond, Index n, Rng& rng);

/// Exact log density. Mixtures only; other families throw UnsupportedOperation.
double target_log_density(const DatasetSpec& spec, const Eigen::Vector2d& x);

/// Mixture mean and covariance after the sample map.
Eigen::Vector2d dataset_mean(const DatasetSpec& spec);
Eigen::Matrix2d dataset_covariance(const DatasetSpec& spec);

std::string to_string(DataFamily f);
DataFamily parse_family(const std::string& s);

}  // namespace dmdlab
