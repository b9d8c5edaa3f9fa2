// Copyright (C) 2026 The dmdlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "dmdlab/params.hpp"
#include "dmdlab/random.hpp"

namespace dmdlab {

enum class ScheduleKind { kFmot, kDdpm };

/// Forward process x_t = alpha_t x0 + sigma_t x1.
///
/// FM-OT uses the straight path alpha = 1 - t, sigma = t. DDPM uses a linear
/// beta(t) = beta_min + t (beta_max - beta_min) with mean coefficient
/// exp(-B(t)/2) and variance 1 - exp(-B(t)/2), B the integral of beta.
struct Schedule {
  ScheduleKind kind = ScheduleKind::kFmot;
  double beta_min = 0.1;
  double beta_max = 20.0;
  double t_min = 1e-3;
  double t_max = 1.0;

  static Schedule fmot(double t_min = 1e-3);
  static Schedule ddpm(double beta_min = 0.1, double beta_max = 20.0, double t_min = 1e-3);

  double beta(double t) const;
  double beta_integral(double t) const;
};

struct AlphaSigma {
  double alpha = 1.0;
  double sigma = 0.0;
};

AlphaSigma alpha_sigma(const Schedule& s, double t);

/// alpha_t x0 + sigma_t noise.
Matrix forward_diffuse(const Schedule& s, const Matrix& x0, double t, const Matrix& noise);
/// Row i is diffused to time t(i).
Matrix forward_diffuse(const Schedule& s, const Matrix& x0, const Vector& t, const Matrix& noise);

struct PathSample {
  Matrix x0;
  Matrix x1;
  Vector t;  // per row
  Matrix xt;
  Matrix v_target;
};

/// Draws x1 ~ N(0, I) and fills xt and the conditional velocity target.
PathSample make_path(const Schedule& s, const Matrix& x0, double t, Rng& rng);
PathSample make_path(const Schedule& s, const Matrix& x0, const Vector& t, Rng& rng);
/// Same with caller-supplied noise.
PathSample make_path(const Schedule& s, const Matrix& x0, const Vector& t, Matrix x1);

/// a(t) with s_f - s_g = a(t) (v_f - v_g) along the FM-OT path.
///
/// From Tweedie on x_t = (1-t) x0 + t x1: E[x1 | x_t] = -t s(x_t), hence
/// v = E[x1 - x0 | x_t] = -(x_t + t s)/(1 - t) and s = -(x_t + (1-t) v)/t.
/// The x_t term cancels in differences, leaving a(t) = -(1 - t)/t.
double score_velocity_factor(const Schedule& s, double t);

/// xt - t v, the clean-data estimate implied by a velocity prediction.
Matrix velocity_to_x0(const Schedule& s, const Matrix& xt, double t, const Matrix& v);
Matrix velocity_to_x0(const Schedule& s, const Matrix& xt, const Vector& t, const Matrix& v);

/// u ~ N(mu, sigma^2), t = sigmoid(u), clamped to [t_min, 1 - 1e-4].
double sample_logit_normal(Rng& rng, double mu, double sigma, double t_min);
Vector sample_logit_normal(Rng& rng, Index n, double mu, double sigma, double t_min);

}  // namespace dmdlab
