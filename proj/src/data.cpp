// Copyright (C) 2026 The dmdlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmdlab/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "dmdlab/errors.hpp"

namespace dmdlab {

namespace {

constexpr std::uint64_t kStandardizeSeed = 0x57a7d;

std::vector<double> weights(const DatasetSpec& spec) {
  std::vector<double> w;
  for (const auto& c : spec.components) w.push_back(c.weight);
  return w;
}

Eigen::Vector2d draw_moons(int moon, double noise, Rng& rng) {
  const double u = uniform(rng, 0.0, std::numbers::pi);
  std::normal_distribution<double> n(0.0, noise);
  Eigen::Vector2d p = moon == 0 ? Eigen::Vector2d(std::cos(u), std::sin(u))
                                : Eigen::Vector2d(1.0 - std::cos(u), 0.5 - std::sin(u));
  p.x() += n(rng);
  p.y() += n(rng);
  return p;
}

// 4 x 4 board on [-2, 2]^2; occupied cells have (i + j) even. Label = column parity.
Eigen::Vector2d draw_checker(int label, bool conditional, Rng& rng) {
  std::uniform_int_distribution<int> cell(0, 3);
  int i = 0;
  int j = 0;
  do {
    i = cell(rng);
    j = cell(rng);
  } while ((i + j) % 2 != 0 || (conditional && i % 2 != label));
  return {-2.0 + i + uniform(rng, 0.0, 1.0), -2.0 + j + uniform(rng, 0.0, 1.0)};
}

Eigen::Vector2d draw_raw(const DatasetSpec& spec, int label, Rng& rng) {
  switch (spec.family) {
    case DataFamily::kGaussianMixture: {
      const auto& c = spec.components[static_cast<std::size_t>(label)];
      const Eigen::Matrix2d l = c.cov.llt().matrixL();
      std::normal_distribution<double> n(0.0, 1.0);
      const double z0 = n(rng);
      const double z1 = n(rng);
      return c.mean + l * Eigen::Vector2d(z0, z1);
    }
    case DataFamily::kTwoMoons:
      return draw_moons(label, spec.noise, rng);
    case DataFamily::kCheckerboard:
      return draw_checker(label, spec.condition_mode == ConditionMode::kComponentLabel, rng);
  }
  return Eigen::Vector2d::Zero();
}

int draw_label(const DatasetSpec& spec, Rng& rng) {
  switch (spec.family) {
    case DataFamily::kGaussianMixture: {
      const auto w = weights(spec);
      return std::discrete_distribution<int>(w.begin(), w.end())(rng);
    }
    case DataFamily::kTwoMoons:
    case DataFamily::kCheckerboard:
      return std::uniform_int_distribution<int>(0, 1)(rng);
  }
  return 0;
}

}  // namespace

int DatasetSpec::num_conditions() const {
  if (condition_mode == ConditionMode::kUnconditional) return 1;
  if (family == DataFamily::kGaussianMixture) return static_cast<int>(components.size());
  return 2;
}

void DatasetSpec::validate() const {
  DMDLAB_REQUIRE(scale > 0.0, "dataset scale must be positive");
  if (family != DataFamily::kGaussianMixture) return;
  DMDLAB_REQUIRE(!components.empty(), "mixture needs at least one component");
  double total = 0.0;
  for (const auto& c : components) {
    DMDLAB_REQUIRE(c.weight > 0.0, "mixture weights must be positive");
    total += c.weight;
    DMDLAB_REQUIRE((c.cov - c.cov.transpose()).cwiseAbs().maxCoeff() <= 1e-12, "mixture covariance not symmetric");
    DMDLAB_REQUIRE(c.cov.llt().info() == Eigen::Success && c.cov.determinant() > 0.0,
                   "mixture covariance not positive definite");
  }
  DMDLAB_REQUIRE(std::abs(total - 1.0) <= 1e-12, "mixture weights must sum to 1");
}

DatasetSpec ring_mixture(int n_components, double radius, double std, ConditionMode mode) {
  DMDLAB_REQUIRE(n_components >= 1 && radius >= 0.0 && std > 0.0, "ring_mixture: invalid parameters");
  DatasetSpec spec;
  spec.family = DataFamily::kGaussianMixture;
  spec.condition_mode = mode;
  for (int k = 0; k < n_components; ++k) {
    const double a = 2.0 * std::numbers::pi * k / n_components;
    MixtureComponent c;
    c.weight = 1.0 / n_components;
    c.mean = {radius * std::cos(a), radius * std::sin(a)};
    c.cov = std * std * Eigen::Matrix2d::Identity();
    spec.components.push_back(c);
  }
  return spec;
}

DatasetSpec two_moons(double noise, ConditionMode mode) {
  DatasetSpec spec;
  spec.family = DataFamily::kTwoMoons;
  spec.noise = noise;
  spec.condition_mode = mode;
  return spec;
}

DatasetSpec checkerboard(ConditionMode mode) {
  DatasetSpec spec;
  spec.family = DataFamily::kCheckerboard;
  spec.condition_mode = mode;
  return spec;
}

Eigen::Vector2d dataset_mean(const DatasetSpec& spec) {
  DMDLAB_REQUIRE(spec.family == DataFamily::kGaussianMixture, "dataset_mean: mixtures only");
  Eigen::Vector2d m = Eigen::Vector2d::Zero();
  for (const auto& c : spec.components) m += c.weight * c.mean;
  return (m - spec.offset) / spec.scale;
}

Eigen::Matrix2d dataset_covariance(const DatasetSpec& spec) {
  DMDLAB_REQUIRE(spec.family == DataFamily::kGaussianMixture, "dataset_covariance: mixtures only");
  Eigen::Vector2d m = Eigen::Vector2d::Zero();
  for (const auto& c : spec.components) m += c.weight * c.mean;
  Eigen::Matrix2d s = Eigen::Matrix2d::Zero();
  for (const auto& c : spec.components) s += c.weight * (c.cov + (c.mean - m) * (c.mean - m).transpose());
  return s / (spec.scale * spec.scale);
}

DatasetSpec standardize(const DatasetSpec& spec) {
  spec.validate();
  DatasetSpec out = spec;
  if (spec.family == DataFamily::kGaussianMixture) {
    // Fold any existing map in, then standardize the components themselves.
    for (auto& c : out.components) {
      c.mean = (c.mean - spec.offset) / spec.scale;
      c.cov /= spec.scale * spec.scale;
    }
    out.offset.setZero();
    out.scale = 1.0;
    const Eigen::Vector2d m = dataset_mean(out);
    const double s = std::sqrt(dataset_covariance(out).trace() / 2.0);
    for (auto& c : out.components) {
      c.mean = (c.mean - m) / s;
      c.cov /= s * s;
    }
    return out;
  }
  // No closed form for moons/checkerboard moments: fixed-seed Monte Carlo.
  Rng rng(kStandardizeSeed);
  DatasetSpec raw = spec;
  raw.offset.setZero();
  raw.scale = 1.0;
  const Batch b = sample_batch(raw, 200000, rng);
  const Eigen::RowVector2d m = b.x0.colwise().mean();
  const Matrix c = b.x0.rowwise() - m;
  const double var = c.squaredNorm() / static_cast<double>(c.rows()) / 2.0;
  out.offset = m.transpose();
  out.scale = std::sqrt(var);
  return out;
}

Batch sample_batch(const DatasetSpec& spec, Index n, Rng& rng) {
  DMDLAB_REQUIRE(n >= 1, "sample_batch: n must be at least 1");
  Batch b;
  b.x0.resize(n, 2);
  b.cond.resize(static_cast<std::size_t>(n));
  const bool labelled = spec.condition_mode == ConditionMode::kComponentLabel;
  for (Index i = 0; i < n; ++i) {
    const int label = draw_label(spec, rng);
    const Eigen::Vector2d x = spec.family == DataFamily::kCheckerboard && !labelled
                                  ? draw_checker(0, false, rng)
                                  : draw_raw(spec, label, rng);
    b.x0.row(i) = ((x - spec.offset) / spec.scale).transpose();
    b.cond[static_cast<std::size_t>(i)] = labelled ? label : 0;
  }
  return b;
}

Matrix sample_condition(const DatasetSpec& spec, int cond, Index n, Rng& rng) {
  DMDLAB_REQUIRE(cond >= 0 && cond < spec.num_conditions(), "sample_condition: label out of range");
  Matrix out(n, 2);
  const bool labelled = spec.condition_mode == ConditionMode::kComponentLabel;
  for (Index i = 0; i < n; ++i) {
    const int label = labelled ? cond : draw_label(spec, rng);
    const Eigen::Vector2d x = spec.family == DataFamily::kCheckerboard && !labelled
                                  ? draw_checker(0, false, rng)
                                  : draw_raw(spec, label, rng);
    out.row(i) = ((x - spec.offset) / spec.scale).transpose();
  }
  return out;
}

double target_log_density(const DatasetSpec& spec, const Eigen::Vector2d& x) {
  if (spec.family != DataFamily::kGaussianMixture) {
    throw UnsupportedOperation("target_log_density: " + to_string(spec.family) + " has no analytic density");
  }
  const Eigen::Vector2d raw = x * spec.scale + spec.offset;
  std::vector<double> terms;
  terms.reserve(spec.components.size());
  for (const auto& c : spec.components) {
    const Eigen::LLT<Eigen::Matrix2d> llt(c.cov);
    const Eigen::Vector2d z = llt.matrixL().solve(raw - c.mean);
    const double logdet = 2.0 * std::log(llt.matrixL()(0, 0) * llt.matrixL()(1, 1));
    terms.push_back(std::log(c.weight) - std::log(2.0 * std::numbers::pi) - 0.5 * logdet - 0.5 * z.squaredNorm());
  }
  const double mx = *std::max_element(terms.begin(), terms.end());
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - mx);
  // Jacobian of the sample map x = (raw - offset) / scale.
  return mx + std::log(acc) + 2.0 * std::log(spec.scale);
}

std::string to_string(DataFamily f) {
  switch (f) {
    case DataFamily::kGaussianMixture:
      return "gaussian_mixture";
    case DataFamily::kTwoMoons:
      return "two_moons";
    case DataFamily::kCheckerboard:
      return "checkerboard";
  }
  return "unknown";
}

DataFamily parse_family(const std::string& s) {
  if (s == "gaussian_mixture") return DataFamily::kGaussianMixture;
  if (s == "two_moons") return DataFamily::kTwoMoons;
  if (s == "checkerboard") return DataFamily::kCheckerboard;
  throw ConfigError("unknown dataset family '" + s + "'");
}

}  // namespace dmdlab
