// Copyright (C) 2026 The dmdlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmdlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numbers>

#include "dmdlab/errors.hpp"

namespace dmdlab {

SampleMoments sample_moments(const Matrix& x) {
  DMDLAB_REQUIRE(x.rows() >= 2, "sample_moments: need at least two rows");
  SampleMoments m;
  m.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd c = x.rowwise() - m.mean.transpose();
  m.cov = (c.transpose() * c) / static_cast<double>(x.rows() - 1);
  return m;
}

namespace {

Eigen::MatrixXd sym_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

bool near_singular(const Eigen::MatrixXd& c) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
  const double top = std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
  return es.eigenvalues().minCoeff() <= 1e-12 * top;
}

double fd_core(const Eigen::VectorXd& ma, Eigen::MatrixXd ca, const Eigen::VectorXd& mb, Eigen::MatrixXd cb,
               bool* regularized) {
  bool reg = false;
  const auto eye = Eigen::MatrixXd::Identity(ca.rows(), ca.cols());
  if (near_singular(ca)) ca += 1e-8 * eye, reg = true;
  if (near_singular(cb)) cb += 1e-8 * eye, reg = true;
  if (regularized) *regularized = reg;
  // tr (Ca Cb)^{1/2} = tr (Ca^{1/2} Cb Ca^{1/2})^{1/2}, symmetric throughout.
  const Eigen::MatrixXd ra = sym_sqrt(ca);
  Eigen::MatrixXd inner = ra * cb * ra;
  inner = 0.5 * (inner + inner.transpose());
  const double cross = sym_sqrt(inner).trace();
  const double v = (ma - mb).squaredNorm() + ca.trace() + cb.trace() - 2.0 * cross;
  return std::max(v, 0.0);
}

}  // namespace

FdResult frechet_gaussian(const Matrix& a, const Matrix& b) {
  DMDLAB_REQUIRE(a.rows() >= 32 && b.rows() >= 32, "frechet_gaussian_distance: each set needs at least 32 points");
  DMDLAB_REQUIRE(a.cols() == b.cols(), "frechet_gaussian_distance: dimension mismatch");
  const SampleMoments ma = sample_moments(a);
  const SampleMoments mb = sample_moments(b);
  FdResult r;
  r.value = fd_core(ma.mean, ma.cov, mb.mean, mb.cov, &r.regularized);
  return r;
}

double frechet_gaussian_distance(const Matrix& a, const Matrix& b) { return frechet_gaussian(a, b).value; }

double frechet_gaussian_distance(const SampleMoments& a, const SampleMoments& b) {
  return fd_core(a.mean, a.cov, b.mean, b.cov, nullptr);
}

namespace {

double median_bandwidth(const Matrix& a, const Matrix& b) {
  Matrix pooled(a.rows() + b.rows(), a.cols());
  pooled << a, b;
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(pooled.rows() * (pooled.rows() - 1) / 2));
  for (Index i = 0; i < pooled.rows(); ++i)
    for (Index j = i + 1; j < pooled.rows(); ++j) d.push_back((pooled.row(i) - pooled.row(j)).norm());
  if (d.empty()) return 1.0;
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid > 0.0 ? *mid : 1.0;
}

double kernel_mean(const Matrix& a, const Matrix& b, double inv2h2, bool skip_diagonal) {
  double acc = 0.0;
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.rows(); ++j) {
      if (skip_diagonal && i == j) continue;
      acc += std::exp(-(a.row(i) - b.row(j)).squaredNorm() * inv2h2);
    }
  const double n = static_cast<double>(a.rows()) * static_cast<double>(b.rows() - (skip_diagonal ? 1 : 0));
  return acc / n;
}

}  // namespace

double mmd_rbf_unclamped(const Matrix& a, const Matrix& b, double bandwidth) {
  DMDLAB_REQUIRE(a.rows() >= 1 && b.rows() >= 1 && a.cols() == b.cols(), "mmd_rbf: bad sample sets");
  DMDLAB_REQUIRE(bandwidth >= 0.0, "mmd_rbf: bandwidth must be positive or the median sentinel");
  const double h = bandwidth > 0.0 ? bandwidth : median_bandwidth(a, b);
  const double inv2h2 = 1.0 / (2.0 * h * h);
  const double kaa = kernel_mean(a, a, inv2h2, a.rows() > 1);
  const double kbb = kernel_mean(b, b, inv2h2, b.rows() > 1);
  return kaa + kbb - 2.0 * kernel_mean(a, b, inv2h2, false);
}

double mmd_rbf(const Matrix& a, const Matrix& b, double bandwidth) {
  return std::max(0.0, mmd_rbf_unclamped(a, b, bandwidth));
}

double kl_estimate(const Matrix& model_samples, const DatasetSpec& spec, double kde_bandwidth) {
  if (spec.family != DataFamily::kGaussianMixture)
    throw UnsupportedOperation("kl_estimate: family has no analytic density");
  DMDLAB_REQUIRE(model_samples.cols() == 2 && model_samples.rows() >= 4, "kl_estimate: need 2D samples");
  const Index n_fit = model_samples.rows() / 2;
  const Matrix fit = model_samples.topRows(n_fit);
  const Matrix eval = model_samples.bottomRows(model_samples.rows() - n_fit);

  Eigen::Matrix2d h;
  if (kde_bandwidth > 0.0) {
    h = kde_bandwidth * kde_bandwidth * Eigen::Matrix2d::Identity();
  } else {
    const SampleMoments m = sample_moments(fit);
    h = std::pow(static_cast<double>(n_fit), -1.0 / 3.0) * m.cov;
  }
  const Eigen::Matrix2d hinv = h.inverse();
  const double log_norm = -std::log(2.0 * std::numbers::pi) - 0.5 * std::log(h.determinant()) -
                          std::log(static_cast<double>(n_fit));

  std::vector<double> terms(static_cast<std::size_t>(n_fit));
  double total = 0.0;
  for (Index i = 0; i < eval.rows(); ++i) {
    const Eigen::Vector2d x = eval.row(i).transpose();
    double top = -std::numeric_limits<double>::infinity();
    for (Index j = 0; j < n_fit; ++j) {
      const Eigen::Vector2d d = x - fit.row(j).transpose();
      terms[static_cast<std::size_t>(j)] = -0.5 * d.dot(hinv * d);
      top = std::max(top, terms[static_cast<std::size_t>(j)]);
    }
    double s = 0.0;
    for (double v : terms) s += std::exp(v - top);
    total += log_norm + top + std::log(s) - target_log_density(spec, x);
  }
  return total / static_cast<double>(eval.rows());
}

std::vector<XiPoint> xi_profile(const VelocityField& field, const Schedule& s, const DatasetSpec& spec,
                                std::span<const double> t_grid, Index n, Rng& rng) {
  DMDLAB_REQUIRE(!t_grid.empty() && n >= 2, "xi_profile: empty grid or too few samples");
  std::vector<XiPoint> out;
  out.reserve(t_grid.size());
  for (double t : t_grid) {
    DMDLAB_REQUIRE(t >= s.t_min && t <= 1.0, "xi_profile: t outside [t_min, 1]");
    const Batch b = sample_batch(spec, n, rng);
    const Matrix noise = standard_normal(rng, n, b.x0.cols());
    const Matrix xt = forward_diffuse(s, b.x0, t, noise);
    const Vector tv = Vector::Constant(n, t);
    const Matrix x0_hat = velocity_to_x0(s, xt, t, field(xt, tv, b.cond));
    const Vector err = (x0_hat - b.x0).rowwise().squaredNorm();
    const double mean = err.mean();
    const double var = (err.array() - mean).square().sum() / static_cast<double>(n - 1);
    out.push_back({t, 0.0, mean, std::sqrt(var / static_cast<double>(n))});
  }
  double top = 0.0;
  for (const auto& p : out) top = std::max(top, p.raw);
  for (auto& p : out) p.xi = top > 0.0 ? p.raw / top : 0.0;
  return out;
}

std::vector<XiPoint> xi_profile(const VelocityNet& net, const Schedule& s, const DatasetSpec& spec,
                                std::span<const double> t_grid, Index n, Rng& rng) {
  return xi_profile(net.field(), s, spec, t_grid, n, rng);
}

std::vector<double> refine_anchor_grid(const CoarseGrid& anchors, int steps) {
  DMDLAB_REQUIRE(steps >= 4 && steps % 4 == 0, "refine_anchor_grid: step count must be a multiple of 4");
  const int per = steps / 4;
  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(steps) + 1);
  for (int i = 3; i >= 0; --i) {
    const double hi = anchors[static_cast<std::size_t>(i)];
    const double lo = anchors.lower(static_cast<std::size_t>(i));
    for (int k = 0; k < per; ++k) grid.push_back(hi + (lo - hi) * static_cast<double>(k) / per);
  }
  grid.push_back(0.0);
  return grid;
}

StepDrift step_consistency(const VelocityField& field, const CoarseGrid& anchors, std::span<const int> step_counts,
                           Index n, std::span<const std::uint64_t> seeds, int num_conditions) {
  DMDLAB_REQUIRE(step_counts.size() >= 2 && !seeds.empty() && n >= 1, "step_consistency: bad arguments");
  DMDLAB_REQUIRE(num_conditions >= 1, "step_consistency: need at least one condition");
  std::vector<int> cond(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) cond[static_cast<std::size_t>(i)] = static_cast<int>(i % num_conditions);

  StepDrift drift;
  for (std::size_t a = 0; a < step_counts.size(); ++a)
    for (std::size_t b = a + 1; b < step_counts.size(); ++b) drift[{step_counts[a], step_counts[b]}] = 0.0;

  for (std::uint64_t seed : seeds) {
    Rng rng(seed);
    const Matrix z = standard_normal(rng, n, 2);
    std::vector<Matrix> ends;
    for (int steps : step_counts) ends.push_back(euler_sample(field, refine_anchor_grid(anchors, steps), z, cond));
    for (std::size_t a = 0; a < step_counts.size(); ++a)
      for (std::size_t b = a + 1; b < step_counts.size(); ++b)
        drift[{step_counts[a], step_counts[b]}] += (ends[a] - ends[b]).rowwise().norm().mean();
  }
  for (auto& [k, v] : drift) v /= static_cast<double>(seeds.size());
  return drift;
}

double pairwise_diversity(const Matrix& samples, std::span<const int> cond) {
  DMDLAB_REQUIRE(static_cast<Index>(cond.size()) == samples.rows(), "pairwise_diversity: label count mismatch");
  std::map<int, std::vector<Index>> groups;
  for (Index i = 0; i < samples.rows(); ++i) groups[cond[static_cast<std::size_t>(i)]].push_back(i);
  double total = 0.0;
  int used = 0;
  for (const auto& [label, rows] : groups) {
    if (rows.size() < 2) {
      std::cerr << "pairwise_diversity: skipping singleton group " << label << "\n";
      continue;
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = i + 1; j < rows.size(); ++j) acc += (samples.row(rows[i]) - samples.row(rows[j])).norm();
    total += acc / (0.5 * static_cast<double>(rows.size() * (rows.size() - 1)));
    ++used;
  }
  DMDLAB_REQUIRE(used > 0, "pairwise_diversity: no group has two samples");
  return total / used;
}

}  // namespace dmdlab
