// Copyright (C) 2026 The dmdlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmdlab/schedules.hpp"

#include <algorithm>
#include <cmath>

#include "dmdlab/errors.hpp"

namespace dmdlab {

Schedule Schedule::fmot(double t_min) {
  DMDLAB_REQUIRE(t_min > 0.0 && t_min < 1.0, "t_min must lie in (0, 1)");
  Schedule s;
  s.kind = ScheduleKind::kFmot;
  s.t_min = t_min;
  return s;
}

Schedule Schedule::ddpm(double beta_min, double beta_max, double t_min) {
  DMDLAB_REQUIRE(t_min > 0.0 && t_min < 1.0, "t_min must lie in (0, 1)");
  DMDLAB_REQUIRE(beta_min > 0.0 && beta_max >= beta_min, "DDPM betas must be positive and ordered");
  Schedule s;
  s.kind = ScheduleKind::kDdpm;
  s.beta_min = beta_min;
  s.beta_max = beta_max;
  s.t_min = t_min;
  return s;
}

double Schedule::beta(double t) const { return beta_min + t * (beta_max - beta_min); }

double Schedule::beta_integral(double t) const { return beta_min * t + 0.5 * t * t * (beta_max - beta_min); }

AlphaSigma alpha_sigma(const Schedule& s, double t) {
  DMDLAB_REQUIRE(t >= 0.0 && t <= 1.0, "alpha_sigma: t must lie in [0, 1]");
  if (s.kind == ScheduleKind::kFmot) return {1.0 - t, t};
  // Variance taken as printed: 1 - exp(-B/2), not the variance-preserving 1 - exp(-B).
  const double a = std::exp(-0.5 * s.beta_integral(t));
  return {a, std::sqrt(1.0 - a)};
}

Matrix forward_diffuse(const Schedule& s, const Matrix& x0, double t, const Matrix& noise) {
  DMDLAB_REQUIRE(x0.rows() == noise.rows() && x0.cols() == noise.cols(), "forward_diffuse: shape mismatch");
  const auto [a, sg] = alpha_sigma(s, t);
  if (sg == 0.0) return x0;
  if (a == 0.0) return noise;
  return a * x0 + sg * noise;
}

Matrix forward_diffuse(const Schedule& s, const Matrix& x0, const Vector& t, const Matrix& noise) {
  DMDLAB_REQUIRE(x0.rows() == noise.rows() && x0.cols() == noise.cols(), "forward_diffuse: shape mismatch");
  DMDLAB_REQUIRE(t.size() == x0.rows(), "forward_diffuse: one time per row required");
  Matrix out(x0.rows(), x0.cols());
  for (Index i = 0; i < x0.rows(); ++i) {
    const auto [a, sg] = alpha_sigma(s, t(i));
    out.row(i) = a * x0.row(i) + sg * noise.row(i);
  }
  return out;
}

PathSample make_path(const Schedule& s, const Matrix& x0, double t, Rng& rng) {
  return make_path(s, x0, Vector::Constant(x0.rows(), t), rng);
}

PathSample make_path(const Schedule& s, const Matrix& x0, const Vector& t, Rng& rng) {
  return make_path(s, x0, t, standard_normal(rng, x0.rows(), x0.cols()));
}

PathSample make_path(const Schedule& s, const Matrix& x0, const Vector& t, Matrix x1) {
  DMDLAB_REQUIRE(t.size() == x0.rows(), "make_path: one time per row required");
  for (Index i = 0; i < t.size(); ++i) {
    DMDLAB_REQUIRE(t(i) >= s.t_min && t(i) <= 1.0, "make_path: t must lie in [t_min, 1]");
  }
  PathSample p;
  p.x0 = x0;
  p.t = t;
  p.xt = forward_diffuse(s, x0, t, x1);
  if (s.kind == ScheduleKind::kFmot) {
    p.v_target = x1 - x0;
  } else {
    // d/dt of alpha x0 + sigma x1 for the printed DDPM kernel.
    p.v_target.resize(x0.rows(), x0.cols());
    for (Index i = 0; i < t.size(); ++i) {
      const auto [a, sg] = alpha_sigma(s, t(i));
      const double da = -0.5 * s.beta(t(i)) * a;
      const double ds = -da / (2.0 * sg);
      p.v_target.row(i) = da * x0.row(i) + ds * x1.row(i);
    }
  }
  p.x1 = std::move(x1);
  return p;
}

double score_velocity_factor(const Schedule& s, double t) {
  if (s.kind != ScheduleKind::kFmot) throw UnsupportedOperation("score_velocity_factor is derived for FM-OT only");
  DMDLAB_REQUIRE(t >= s.t_min && t < 1.0, "score_velocity_factor: t must lie in [t_min, 1)");
  return -(1.0 - t) / t;
}

Matrix velocity_to_x0(const Schedule& s, const Matrix& xt, double t, const Matrix& v) {
  if (s.kind != ScheduleKind::kFmot) throw UnsupportedOperation("velocity_to_x0 requires the FM-OT schedule");
  DMDLAB_REQUIRE(xt.rows() == v.rows() && xt.cols() == v.cols(), "velocity_to_x0: shape mismatch");
  if (t == 0.0) return xt;
  return xt - t * v;
}

Matrix velocity_to_x0(const Schedule& s, const Matrix& xt, const Vector& t, const Matrix& v) {
  if (s.kind != ScheduleKind::kFmot) throw UnsupportedOperation("velocity_to_x0 requires the FM-OT schedule");
  DMDLAB_REQUIRE(xt.rows() == v.rows() && xt.cols() == v.cols() && t.size() == xt.rows(),
                 "velocity_to_x0: shape mismatch");
  return xt - t.asDiagonal() * v;
}

double sample_logit_normal(Rng& rng, double mu, double sigma, double t_min) {
  std::normal_distribution<double> n(mu, sigma);
  const double t = 1.0 / (1.0 + std::exp(-n(rng)));
  return std::clamp(t, t_min, 1.0 - 1e-4);
}

Vector sample_logit_normal(Rng& rng, Index n, double mu, double sigma, double t_min) {
  Vector t(n);
  for (Index i = 0; i < n; ++i) t(i) = sample_logit_normal(rng, mu, sigma, t_min);
  return t;
}

}  // namespace dmdlab
