// Copyright (C) 2026 The dmdlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Closed-form Gaussian calculus along the straight flow-matching path
// X_t = (1 - t) X_0 + t X_1, X_0 ~ N(m, Sigma), X_1 ~ N(0, I).

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "dmdlab/errors.hpp"

namespace dmdlab {

template <typename Scalar>
using Vec2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar>
using Mat2 = Eigen::Matrix<Scalar, 2, 2>;

template <typename Scalar>
struct Gaussian2 {
  Vec2<Scalar> mean = Vec2<Scalar>::Zero();
  Mat2<Scalar> cov = Mat2<Scalar>::Identity();
};

using Gaussian2d = Gaussian2<double>;

template <typename Scalar>
bool is_spd(const Mat2<Scalar>& m) {
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= Scalar(1e-10) * (Scalar(1) + m.cwiseAbs().maxCoeff()) &&
         m(0, 0) > Scalar(0) && m.determinant() > Scalar(0);
}

/// Affine velocity field v(x) = A x + b.
template <typename Scalar>
struct LinearField {
  Mat2<Scalar> A = Mat2<Scalar>::Zero();
  Vec2<Scalar> b = Vec2<Scalar>::Zero();

  Vec2<Scalar> operator()(const Vec2<Scalar>& x) const { return A * x + b; }
  LinearField operator-(const LinearField& o) const { return {A - o.A, b - o.b}; }
  LinearField operator+(const LinearField& o) const { return {A + o.A, b + o.b}; }
};

/// Law of X_t: N((1 - t) m, (1 - t)^2 Sigma + t^2 I).
template <typename Scalar>
Gaussian2<Scalar> fm_marginal(const Gaussian2<Scalar>& g, Scalar t) {
  const Scalar a = Scalar(1) - t;
  return {a * g.mean, a * a * g.cov + t * t * Mat2<Scalar>::Identity()};
}

/// E[X_1 - X_0 | X_t = x] by joint-Gaussian conditioning:
/// Cov(X_1 - X_0, X_t) = t I - (1 - t) Sigma, Var(X_t) = (1 - t)^2 Sigma + t^2 I.
template <typename Scalar>
LinearField<Scalar> gaussian_target_field(const Vec2<Scalar>& m, const Mat2<Scalar>& sigma, Scalar t) {
  DMDLAB_REQUIRE(t > Scalar(0) && t <= Scalar(1), "gaussian_target_field: t must lie in (0, 1]");
  const Scalar a = Scalar(1) - t;
  const Mat2<Scalar> var = a * a * sigma + t * t * Mat2<Scalar>::Identity();
  const Scalar det = var.determinant();
  if (!(std::abs(det) > Scalar(1e-300)) || !std::isfinite(static_cast<double>(det))) {
    throw NumericFailure("gaussian_target_field", "singular marginal covariance");
  }
  const Mat2<Scalar> cross = t * Mat2<Scalar>::Identity() - a * sigma;
  LinearField<Scalar> f;
  f.A = cross * var.inverse();
  f.b = -m - f.A * (a * m);
  return f;
}

template <typename Scalar>
LinearField<Scalar> gaussian_target_field(const Gaussian2<Scalar>& g, Scalar t) {
  return gaussian_target_field<Scalar>(g.mean, g.cov, t);
}

/// Score of the t-marginal, -Var^{-1}(x - (1 - t) m), as a linear field.
template <typename Scalar>
LinearField<Scalar> gaussian_marginal_score(const Gaussian2<Scalar>& g, Scalar t) {
  const Gaussian2<Scalar> p = fm_marginal(g, t);
  LinearField<Scalar> s;
  s.A = -p.cov.inverse();
  s.b = -s.A * p.mean;
  return s;
}

template <typename Scalar>
Scalar gaussian_log_density(const Gaussian2<Scalar>& g, const Vec2<Scalar>& x) {
  const Vec2<Scalar> d = x - g.mean;
  return -std::log(Scalar(2) * std::numbers::pi_v<Scalar>) - Scalar(0.5) * std::log(g.cov.determinant()) -
         Scalar(0.5) * d.dot(g.cov.inverse() * d);
}

/// KL(p || q) for bivariate Gaussians.
template <typename Scalar>
Scalar gaussian_kl(const Gaussian2<Scalar>& p, const Gaussian2<Scalar>& q) {
  DMDLAB_REQUIRE(is_spd(p.cov) && is_spd(q.cov), "gaussian_kl: covariances must be SPD");
  const Mat2<Scalar> qi = q.cov.inverse();
  const Vec2<Scalar> d = q.mean - p.mean;
  return Scalar(0.5) * ((qi * p.cov).trace() + d.dot(qi * d) - Scalar(2) +
                        std::log(q.cov.determinant() / p.cov.determinant()));
}

/// E ||F(X)||^2 for X ~ N(mu, S) and affine F.
template <typename Scalar>
Scalar expected_sq_norm(const LinearField<Scalar>& f, const Gaussian2<Scalar>& x) {
  const Vec2<Scalar> m = f(x.mean);
  return m.squaredNorm() + (f.A * x.cov * f.A.transpose()).trace();
}

}  // namespace dmdlab
