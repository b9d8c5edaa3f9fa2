// Copyright (C) 2026 The dmdlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmdlab/theorylab.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "dmdlab/errors.hpp"

namespace dmdlab {

TimeGrid trapezoid_grid(double lo, double hi, int n) {
  DMDLAB_REQUIRE(n >= 2 && hi > lo, "trapezoid_grid: need n >= 2 and hi > lo");
  TimeGrid g;
  g.t.resize(static_cast<std::size_t>(n));
  g.w.assign(static_cast<std::size_t>(n), 1.0 / (n - 1));
  for (int i = 0; i < n; ++i) g.t[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
  g.w.front() *= 0.5;
  g.w.back() *= 0.5;
  return g;
}

TimeGrid default_time_grid(const Schedule& s) { return trapezoid_grid(s.t_min, 0.98, 64); }

// ---------------------------------------------------------------------------

void GaussianWorld::validate() const {
  DMDLAB_REQUIRE(is_spd(generator.cov) && is_spd(fake.cov) && is_spd(teacher.cov),
                 "GaussianWorld: covariances must be SPD");
}

namespace {

Eigen::Matrix2d random_spd(Rng& rng, double lo, double hi, bool isotropic) {
  const double a = uniform(rng, lo, hi);
  if (isotropic) return a * Eigen::Matrix2d::Identity();
  const double b = uniform(rng, lo, hi);
  const double th = uniform(rng, 0.0, std::numbers::pi);
  Eigen::Matrix2d r;
  r << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
  return r * Eigen::Vector2d(a, b).asDiagonal() * r.transpose();
}

Eigen::Vector2d random_vec(Rng& rng, double range) {
  return {uniform(rng, -range, range), uniform(rng, -range, range)};
}

void require_fmot(const Schedule& s) {
  if (s.kind != ScheduleKind::kFmot) throw UnsupportedOperation("Gaussian calculus is defined for the FM-OT path");
}

}  // namespace

GaussianWorld random_world(Rng& rng, const RandomWorldOptions& opt) {
  GaussianWorld w;
  for (Gaussian2d* g : {&w.generator, &w.fake, &w.teacher}) {
    g->mean = random_vec(rng, opt.mean_range);
    g->cov = random_spd(rng, opt.eig_min, opt.eig_max, opt.isotropic);
  }
  std::normal_distribution<double> n(0.0, opt.defect_scale);
  w.generator_defect = {n(rng), n(rng)};
  return w;
}

double expected_kl_gf(const GaussianWorld& w, const TimeGrid& g) {
  double acc = 0.0;
  for (std::size_t i = 0; i < g.t.size(); ++i)
    acc += g.w[i] * gaussian_kl(fm_marginal(w.generator, g.t[i]), fm_marginal(w.fake, g.t[i]));
  return acc;
}

double expected_kl_gr(const GaussianWorld& w, const TimeGrid& g) {
  double acc = 0.0;
  for (std::size_t i = 0; i < g.t.size(); ++i)
    acc += g.w[i] * gaussian_kl(fm_marginal(w.generator, g.t[i]), fm_marginal(w.teacher, g.t[i]));
  return acc;
}

double expected_gap_sq(const GaussianWorld& w, const TimeGrid& g) {
  double acc = 0.0;
  for (std::size_t i = 0; i < g.t.size(); ++i) {
    const double t = g.t[i];
    const auto gap = gaussian_target_field(w.fake, t) - gaussian_target_field(w.generator, t);
    acc += g.w[i] * expected_sq_norm(gap, fm_marginal(w.generator, t));
  }
  return acc;
}

double calibrate_fisher_constant(std::span<const GaussianWorld> worlds, const TimeGrid& g) {
  DMDLAB_REQUIRE(!worlds.empty(), "calibrate_fisher_constant: empty family");
  double c = 0.0;
  for (const auto& w : worlds) {
    const double gap = expected_gap_sq(w, g);
    if (gap > 1e-14) c = std::max(c, expected_kl_gf(w, g) / gap);
  }
  return c;
}

EpsilonReport epsilon_bound_check(const GaussianWorld& w, const Schedule& s, const TimeGrid& g, double C) {
  require_fmot(s);
  w.validate();
  EpsilonReport r;
  r.C = C;
  r.kl_gf = expected_kl_gf(w, g);
  r.dtilde = std::sqrt(expected_gap_sq(w, g));
  r.betatilde = w.generator_defect.norm();
  r.eps = 2.0 * C * (r.dtilde * r.dtilde + r.betatilde * r.betatilde);
  r.holds = r.kl_gf <= r.eps + 1e-12;
  return r;
}

SandwichReport sandwich_check(const GaussianWorld& w, const Schedule& s, const TimeGrid& g, double eps, Index n_mc,
                              Rng& rng) {
  require_fmot(s);
  w.validate();
  DMDLAB_REQUIRE(n_mc >= 2, "sandwich_check: need at least two Monte Carlo draws");
  SandwichReport r;
  r.eps = eps;
  r.kl_gr = expected_kl_gr(w, g);
  r.kl_gf = expected_kl_gf(w, g);
  r.v_closed = r.kl_gr - r.kl_gf;

  std::discrete_distribution<std::size_t> pick(g.w.begin(), g.w.end());
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<Gaussian2d> pg, pf, pr;
  std::vector<Eigen::Matrix2d> chol;
  for (double t : g.t) {
    pg.push_back(fm_marginal(w.generator, t));
    pf.push_back(fm_marginal(w.fake, t));
    pr.push_back(fm_marginal(w.teacher, t));
    chol.push_back(pg.back().cov.llt().matrixL());
  }
  double sum = 0.0, sum_sq = 0.0;
  for (Index i = 0; i < n_mc; ++i) {
    const std::size_t k = pick(rng);
    const Eigen::Vector2d z(n01(rng), n01(rng));
    const Eigen::Vector2d x = pg[k].mean + chol[k] * z;
    const double v = gaussian_log_density(pf[k], x) - gaussian_log_density(pr[k], x);
    sum += v;
    sum_sq += v * v;
  }
  const double n = static_cast<double>(n_mc);
  r.v_mc = sum / n;
  const double var = std::max(0.0, (sum_sq - n * r.v_mc * r.v_mc) / (n - 1.0));
  r.v_mc_stderr = std::sqrt(var / n);
  r.agree = std::abs(r.v_mc - r.v_closed) < 3.0 * r.v_mc_stderr;
  r.holds = r.kl_gr - eps <= r.v_closed + 1e-12 && r.v_closed <= r.kl_gr + 1e-12;
  return r;
}

// ---------------------------------------------------------------------------

namespace {

void tally(InequalityStats& s, double lhs, double rhs) {
  const double slack = rhs - lhs;
  s.slack.push_back(slack);
  if (s.total == 0 || slack < s.worst_slack) s.worst_slack = slack;
  ++s.total;
  if (slack >= -kSlackTolerance) ++s.passed;
}

}  // namespace

RecursionReport check_recursions(std::span<const TrackRecord> trace, double lambda_ida, const LipschitzConstants& c) {
  DMDLAB_REQUIRE(trace.size() >= 2, "check_recursions: trace needs at least two rounds");
  DMDLAB_REQUIRE(lambda_ida > 0.0 && lambda_ida <= 1.0, "check_recursions: lambda outside (0, 1]");
  const double lam = lambda_ida;
  const double K = c.L * (1.0 - lam) + 2.0 * c.C_v + c.C_vhat;
  RecursionReport r;
  for (const auto& rec : trace) {
    const double step = rec.theta_step;
    tally(r.e, rec.e_k, lam * rec.e_pre + lam * step);
    tally(r.delta, rec.delta_k, c.L * lam * rec.e_pre + (c.L * (1.0 - lam) + c.C_v) * step);
    tally(r.dbar, rec.dbar_k, c.L * lam * rec.e_pre + rec.betabar_pre + K * step);
  }
  return r;
}

// ---------------------------------------------------------------------------

namespace {

struct ScriptedTerms {
  std::vector<Eigen::Matrix2d> A;  // x coefficient of the target field
  std::vector<Eigen::Matrix2d> B;  // minus the mean coefficient
};

ScriptedTerms scripted_terms(const ScriptedDynamics& d, const TimeGrid& g) {
  ScriptedTerms s;
  for (double t : g.t) {
    const auto f = gaussian_target_field<double>(Eigen::Vector2d::Zero(), d.sigma, t);
    s.A.push_back(f.A);
    s.B.push_back(Eigen::Matrix2d::Identity() + (1.0 - t) * f.A);
  }
  return s;
}

double op_norm(const Eigen::Matrix2d& m) { return Eigen::JacobiSVD<Eigen::Matrix2d>(m).singularValues()(0); }

TrackRecord scripted_measure(const ScriptedDynamics& d, const ScriptedTerms& terms, const TimeGrid& g,
                             const Eigen::Vector2d& theta, const Eigen::Vector2d& phi) {
  TrackRecord r;
  r.e_k = (phi - theta).norm();
  const Eigen::Vector2d beta = d.defect * theta;
  double dt2 = 0.0;
  for (std::size_t i = 0; i < g.t.size(); ++i) {
    const Eigen::Matrix2d M = -terms.B[i] + d.defect;
    const Eigen::Vector2d gap = -terms.B[i] * (phi - theta) + d.defect * phi;
    r.delta_k += g.w[i] * (M * (phi - theta)).norm();
    r.dbar_k += g.w[i] * gap.norm();
    dt2 += g.w[i] * gap.squaredNorm();
  }
  r.betabar_k = beta.norm();
  r.dtilde_k = std::sqrt(dt2);
  r.betatilde_k = beta.norm();
  r.eps_k = 2.0 * d.C * (dt2 + beta.squaredNorm());
  double kl_gf = 0.0, kl_gr = 0.0;
  const Gaussian2d pg{theta, d.sigma}, pf{phi, d.sigma}, pr{d.teacher_mean, d.sigma};
  for (std::size_t i = 0; i < g.t.size(); ++i) {
    const auto mg = fm_marginal(pg, g.t[i]);
    kl_gf += g.w[i] * gaussian_kl(mg, fm_marginal(pf, g.t[i]));
    kl_gr += g.w[i] * gaussian_kl(mg, fm_marginal(pr, g.t[i]));
  }
  r.kl_gf = kl_gf;
  r.kl_gr = kl_gr;
  return r;
}

}  // namespace

LipschitzConstants scripted_constants(const ScriptedDynamics& d, const TimeGrid& g) {
  const ScriptedTerms terms = scripted_terms(d, g);
  LipschitzConstants c;
  for (std::size_t i = 0; i < g.t.size(); ++i) {
    c.L += g.w[i] * op_norm(-terms.B[i] + d.defect);
    c.C_vhat += g.w[i] * op_norm(terms.B[i]);
  }
  c.C_v = c.L;
  return c;
}

ScriptedTrace run_scripted_trace(const ScriptedDynamics& d, const TimeGrid& g, Rng& rng) {
  DMDLAB_REQUIRE(d.lambda > 0.0 && d.lambda <= 1.0, "run_scripted_trace: lambda outside (0, 1]");
  DMDLAB_REQUIRE(d.rounds >= 1 && is_spd(d.sigma), "run_scripted_trace: bad dynamics");
  const ScriptedTerms terms = scripted_terms(d, g);
  ScriptedTrace out;
  out.exact = scripted_constants(d, g);
  std::normal_distribution<double> n01(0.0, 1.0);
  Eigen::Vector2d theta = d.theta0, phi = d.phi0;
  double scale = 1.0;
  for (int k = 0; k < d.rounds; ++k) {
    phi += d.fake_rate * (theta - phi);
    const TrackRecord pre = scripted_measure(d, terms, g, theta, phi);
    const Eigen::Vector2d step =
        scale * (-d.lr * (theta - d.teacher_mean) + d.step_noise * Eigen::Vector2d(n01(rng), n01(rng)));
    theta += step;
    phi = d.lambda * phi + (1.0 - d.lambda) * theta;
    TrackRecord post = scripted_measure(d, terms, g, theta, phi);
    post.k = k;
    post.theta_step = step.norm();
    post.e_pre = pre.e_k;
    post.delta_pre = pre.delta_k;
    post.dbar_pre = pre.dbar_k;
    post.betabar_pre = pre.betabar_k;
    out.records.push_back(post);
    scale *= d.step_decay;
  }
  return out;
}

LimitReport limit_check(std::span<const TrackRecord> trace, double tail_fraction, double tol) {
  DMDLAB_REQUIRE(!trace.empty() && tail_fraction > 0.0 && tail_fraction <= 1.0, "limit_check: bad arguments");
  const auto n = trace.size();
  const auto tail = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(tail_fraction * n)));
  LimitReport r;
  for (std::size_t i = 0; i < n; ++i) {
    r.max_betabar = std::max({r.max_betabar, trace[i].betabar_k, trace[i].betabar_pre});
    if (i >= n - tail) {
      r.limsup_e = std::max(r.limsup_e, trace[i].e_k);
      r.limsup_dbar = std::max(r.limsup_dbar, trace[i].dbar_k);
    }
  }
  r.holds = r.limsup_e <= tol && r.limsup_dbar <= r.max_betabar + tol;
  return r;
}

// ---------------------------------------------------------------------------

TrackProbe make_track_probe(Index n, int num_conditions, const Schedule& s, Rng& rng) {
  DMDLAB_REQUIRE(n >= 1 && num_conditions >= 1, "make_track_probe: bad sizes");
  TrackProbe p;
  p.z = standard_normal(rng, n, 2);
  p.x1 = standard_normal(rng, n, 2);
  p.t.resize(n);
  std::uniform_int_distribution<int> label(0, num_conditions - 1);
  for (Index i = 0; i < n; ++i) {
    p.t(i) = uniform(rng, s.t_min, 1.0);
    p.cond.push_back(label(rng));
  }
  return p;
}

namespace {

std::vector<double> anchor_path(const CoarseGrid& a) { return {a[3], a[2], a[1], a[0], 0.0}; }

struct ProbePoints {
  Matrix x0;
  Matrix xt;
};

ProbePoints probe_points(const VelocityField& field, const CoarseGrid& anchors, const TrackProbe& p) {
  ProbePoints out;
  out.x0 = euler_sample(field, anchor_path(anchors), p.z, p.cond);
  out.xt.resize(out.x0.rows(), out.x0.cols());
  for (Index i = 0; i < out.x0.rows(); ++i) out.xt.row(i) = (1.0 - p.t(i)) * out.x0.row(i) + p.t(i) * p.x1.row(i);
  return out;
}

double mean_row_norm(const Matrix& m) { return m.rowwise().norm().mean(); }
double mean_row_sq(const Matrix& m) { return m.rowwise().squaredNorm().mean(); }

}  // namespace

TrackRecord measure_fields(const VelocityField& theta, const VelocityField& phi, const Matrix& x0,
                           const TrackProbe& probe, double C) {
  DMDLAB_REQUIRE(x0.rows() == probe.x1.rows() && x0.cols() == probe.x1.cols() && probe.t.size() == x0.rows(),
                 "measure_fields: x0 does not match the probe");
  Matrix xt(x0.rows(), x0.cols());
  for (Index i = 0; i < x0.rows(); ++i) xt.row(i) = (1.0 - probe.t(i)) * x0.row(i) + probe.t(i) * probe.x1.row(i);
  const Matrix target = probe.x1 - x0;
  const Matrix vt = theta(xt, probe.t, probe.cond);
  const Matrix vf = phi(xt, probe.t, probe.cond);
  TrackRecord r;
  r.proxy = true;
  r.delta_k = mean_row_norm(vf - vt);
  r.dbar_k = mean_row_norm(vf - target);
  r.betabar_k = mean_row_norm(vt - target);
  const double d2 = mean_row_sq(vf - target);
  const double b2 = mean_row_sq(vt - target);
  r.dtilde_k = std::sqrt(d2);
  r.betatilde_k = std::sqrt(b2);
  r.eps_k = 2.0 * C * (d2 + b2);
  return r;
}

TrackRecord measure_tracking(const VelocityNet& theta, const VelocityNet& phi, const Schedule& s,
                             const CoarseGrid& anchors, const TrackProbe& probe, double C) {
  DMDLAB_REQUIRE(theta.params().same_layout(phi.params()), "measure_tracking: generator and fake layouts differ");
  require_fmot(s);
  const VelocityField gen = theta.field();
  TrackRecord r = measure_fields(gen, phi.field(), euler_sample(gen, anchor_path(anchors), probe.z, probe.cond),
                                 probe, C);
  r.e_k = param_distance(phi.params(), theta.params());
  return r;
}

TrackRecord measure_tracking(const VelocityNet& theta, const VelocityNet& phi, const Schedule& s, Index n_samples,
                             Rng& rng) {
  const TrackProbe probe = make_track_probe(n_samples, theta.config().num_conditions, s, rng);
  return measure_tracking(theta, phi, s, CoarseGrid::uniform(), probe);
}

double lipschitz_ratio(const ParamField& f, std::span<const ParamPair> pairs, const Matrix& x, const Vector& t,
                       std::span<const int> cond) {
  double best = 0.0;
  for (const auto& [p, q] : pairs) {
    const double dp = param_distance(p, q);
    if (dp <= 0.0) continue;
    best = std::max(best, mean_row_norm(f(p, x, t, cond) - f(q, x, t, cond)) / dp);
  }
  return best;
}

std::vector<ParamPair> random_probe_pairs(const ParamVector& center, double probe_scale, int n_probes, Rng& rng) {
  DMDLAB_REQUIRE(probe_scale > 0.0 && n_probes >= 0, "random_probe_pairs: bad probe settings");
  std::vector<ParamPair> out;
  std::normal_distribution<double> n01(0.0, 1.0);
  for (int i = 0; i < n_probes; ++i) {
    Vector u(center.size());
    for (Index j = 0; j < u.size(); ++j) u(j) = n01(rng);
    u *= probe_scale / u.norm();
    out.emplace_back(center, ParamVector(center.layout_ptr(), center.flat() + u));
  }
  return out;
}

LipschitzConstants estimate_constants(const VelocityNet& center, const Schedule& s, const CoarseGrid& anchors,
                                      const TrackProbe& probe, double probe_scale, int n_probes, Rng& rng,
                                      std::span<const ParamPair> extra_pairs, double safety) {
  require_fmot(s);
  std::vector<ParamPair> pairs = random_probe_pairs(center.params(), probe_scale, n_probes, rng);
  pairs.insert(pairs.end(), extra_pairs.begin(), extra_pairs.end());

  const ProbePoints base = probe_points(center.field(), anchors, probe);
  const ParamField f = [&center](const ParamVector& p, const Matrix& x, const Vector& t, std::span<const int> c) {
    return center.velocity(p, x, t, c);
  };
  LipschitzConstants out;
  out.L = safety * lipschitz_ratio(f, pairs, base.xt, probe.t, probe.cond);

  auto net_at = [&center](const ParamVector& p) {
    VelocityNet n = center;
    n.set_params(p);
    return n;
  };
  auto fit_fields = [&](const Matrix& x0) {
    const Eigen::Vector2d m = x0.colwise().mean().transpose();
    const Eigen::MatrixXd c = x0.rowwise() - m.transpose();
    const Eigen::Matrix2d cov = (c.transpose() * c) / static_cast<double>(x0.rows() - 1);
    Matrix v(base.xt.rows(), 2);
    for (Index i = 0; i < base.xt.rows(); ++i) {
      const auto fld = gaussian_target_field<double>(m, cov, probe.t(i));
      v.row(i) = fld(base.xt.row(i).transpose()).transpose();
    }
    return v;
  };

  double cv = 0.0, cvhat = 0.0;
  for (const auto& [p, q] : pairs) {
    const double dp = param_distance(p, q);
    if (dp <= 0.0) continue;
    const VelocityNet np = net_at(p), nq = net_at(q);
    const ProbePoints pp = probe_points(np.field(), anchors, probe);
    const ProbePoints pq = probe_points(nq.field(), anchors, probe);
    const Matrix vp = np.velocity(pp.xt, probe.t, probe.cond);
    const Matrix vq = nq.velocity(pq.xt, probe.t, probe.cond);
    cv = std::max(cv, mean_row_norm(vp - vq) / dp);
    cvhat = std::max(cvhat, mean_row_norm(fit_fields(pp.x0) - fit_fields(pq.x0)) / dp);
  }
  out.C_v = safety * cv;
  out.C_vhat = safety * cvhat;
  return out;
}

}  // namespace dmdlab
