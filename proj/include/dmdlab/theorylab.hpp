// Copyright (C) 2026 The dmdlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "dmdlab/gaussian.hpp"
#include "dmdlab/nets.hpp"
#include "dmdlab/samplers.hpp"
#include "dmdlab/schedules.hpp"

namespace dmdlab {

/// Quadrature nodes for E_t; weights sum to one.
struct TimeGrid {
  std::vector<double> t;
  std::vector<double> w;
};

/// n uniform nodes on [lo, hi] with trapezoid weights.
TimeGrid trapezoid_grid(double lo, double hi, int n);
/// 64 nodes on [t_min, 0.98].
TimeGrid default_time_grid(const Schedule& s);

/// Per-round tracking quantities. The unsuffixed fields describe the state
/// after the round (after the generator step and the blend); the *_pre fields
/// describe the state the round started from.
struct TrackRecord {
  long long k = 0;
  double e_k = 0.0;
  double delta_k = 0.0;
  double dbar_k = 0.0;
  double betabar_k = 0.0;
  double dtilde_k = 0.0;
  double betatilde_k = 0.0;
  double eps_k = 0.0;
  std::optional<double> kl_gf;
  std::optional<double> kl_gr;
  double theta_step = 0.0;

  double e_pre = 0.0;
  double delta_pre = 0.0;
  double dbar_pre = 0.0;
  double betabar_pre = 0.0;

  bool proxy = false;  // dbar/betabar are pathwise upper proxies
};

// ---------------------------------------------------------------------------
// Analytic family

struct GaussianWorld {
  Gaussian2d generator;
  Gaussian2d fake;
  Gaussian2d teacher;
  /// The generator's own velocity is its target field plus this offset.
  Eigen::Vector2d generator_defect = Eigen::Vector2d::Zero();

  void validate() const;
};

struct RandomWorldOptions {
  double mean_range = 2.0;
  double eig_min = 0.3;
  double eig_max = 2.0;
  double defect_scale = 0.3;
  bool isotropic = false;
};

GaussianWorld random_world(Rng& rng, const RandomWorldOptions& opt = {});

/// E_t KL(p_g,t || p_f,t) over the grid.
double expected_kl_gf(const GaussianWorld& w, const TimeGrid& g);
double expected_kl_gr(const GaussianWorld& w, const TimeGrid& g);
/// E_t E_{p_g,t} |v_f - v_hat_g|^2 with v_f the fake's exact field.
double expected_gap_sq(const GaussianWorld& w, const TimeGrid& g);

/// Largest E_t KL / E_t gap^2 over the family.
double calibrate_fisher_constant(std::span<const GaussianWorld> worlds, const TimeGrid& g);

struct EpsilonReport {
  double kl_gf = 0.0;
  double dtilde = 0.0;
  double betatilde = 0.0;
  double eps = 0.0;
  double C = 0.0;
  bool holds = false;
};

EpsilonReport epsilon_bound_check(const GaussianWorld& w, const Schedule& s, const TimeGrid& g, double C);

struct SandwichReport {
  double v_mc = 0.0;
  double v_mc_stderr = 0.0;
  double v_closed = 0.0;
  double kl_gr = 0.0;
  double kl_gf = 0.0;
  double eps = 0.0;
  bool agree = false;  // |v_mc - v_closed| < 3 standard errors
  bool holds = false;  // kl_gr - eps <= v_closed <= kl_gr
};

SandwichReport sandwich_check(const GaussianWorld& w, const Schedule& s, const TimeGrid& g, double eps, Index n_mc,
                              Rng& rng);

// ---------------------------------------------------------------------------
// Recursion checks

struct LipschitzConstants {
  double L = 0.0;
  double C_v = 0.0;
  double C_vhat = 0.0;
};

struct InequalityStats {
  int total = 0;
  int passed = 0;
  double worst_slack = 0.0;
  std::vector<double> slack;

  double pass_fraction() const { return total == 0 ? 1.0 : static_cast<double>(passed) / total; }
};

struct RecursionReport {
  InequalityStats e;      // e_{k+1} <= lam e_k + lam |step|
  InequalityStats delta;  // Delta_{k+1} <= L lam e_k + [L (1 - lam) + C_v] |step|
  InequalityStats dbar;   // dbar_{k+1} <= L lam e_k + betabar_k + K |step|
};

inline constexpr double kSlackTolerance = 1e-10;

RecursionReport check_recursions(std::span<const TrackRecord> trace, double lambda_ida, const LipschitzConstants& c);

/// Two-dimensional parameter dynamics on the analytic family. The parameter
/// is a mean; fake and generator share the map
///   v_w(x, t) = A_t x - B_t w + defect w,
/// where A_t x - B_t w is the target field of N(w, sigma).
struct ScriptedDynamics {
  Eigen::Matrix2d sigma = Eigen::Matrix2d::Identity();
  Eigen::Matrix2d defect = Eigen::Matrix2d::Zero();
  Eigen::Vector2d teacher_mean = Eigen::Vector2d(1.0, -0.5);
  Eigen::Vector2d theta0 = Eigen::Vector2d::Zero();
  Eigen::Vector2d phi0 = Eigen::Vector2d::Zero();
  double lr = 0.1;           // generator pull toward the teacher mean
  double step_noise = 0.05;  // isotropic jitter on each generator step
  double step_decay = 1.0;   // step k is scaled by step_decay^k
  double fake_rate = 0.5;    // fake pull toward theta between rounds
  double lambda = 0.95;
  double C = 0.0;  // for eps_k
  int rounds = 200;
};

struct ScriptedTrace {
  std::vector<TrackRecord> records;
  LipschitzConstants exact;
};

LipschitzConstants scripted_constants(const ScriptedDynamics& d, const TimeGrid& g);
ScriptedTrace run_scripted_trace(const ScriptedDynamics& d, const TimeGrid& g, Rng& rng);

struct LimitReport {
  double limsup_e = 0.0;
  double limsup_dbar = 0.0;
  double max_betabar = 0.0;
  bool holds = false;
};

/// Tail maxima over the last tail_fraction of rounds.
LimitReport limit_check(std::span<const TrackRecord> trace, double tail_fraction = 0.1, double tol = 1e-6);

// ---------------------------------------------------------------------------
// Neural mode

/// Fixed randomness so repeated measurements compare like with like.
struct TrackProbe {
  Matrix z;
  std::vector<int> cond;
  Matrix x1;
  Vector t;
};

TrackProbe make_track_probe(Index n, int num_conditions, const Schedule& s, Rng& rng);

/// Delta and the pathwise proxies on caller-supplied clean samples x0
/// (row i diffused with probe.x1 row i to probe.t(i)). e_k is left at 0.
TrackRecord measure_fields(const VelocityField& theta, const VelocityField& phi, const Matrix& x0,
                           const TrackProbe& probe, double C = 0.0);

/// e, Delta and the pathwise upper proxies for dbar and betabar, with
/// X_0 from the generator's anchor sampler and t uniform on [t_min, 1].
TrackRecord measure_tracking(const VelocityNet& theta, const VelocityNet& phi, const Schedule& s,
                             const CoarseGrid& anchors, const TrackProbe& probe, double C = 0.0);
TrackRecord measure_tracking(const VelocityNet& theta, const VelocityNet& phi, const Schedule& s, Index n_samples,
                             Rng& rng);

using ParamField = std::function<Matrix(const ParamVector&, const Matrix& x, const Vector& t, std::span<const int> cond)>;
using ParamPair = std::pair<ParamVector, ParamVector>;

/// Largest E|v_p(x) - v_q(x)| / |p - q| over the pairs, x held fixed.
double lipschitz_ratio(const ParamField& f, std::span<const ParamPair> pairs, const Matrix& x, const Vector& t,
                       std::span<const int> cond);

/// Pairs (center, center + probe_scale u) with u uniform on the unit sphere.
std::vector<ParamPair> random_probe_pairs(const ParamVector& center, double probe_scale, int n_probes, Rng& rng);

/// L from field changes at fixed points; C_v with the points re-drawn from
/// each parameter's own sampler under shared noise; C_vhat from Gaussian fits
/// of the generator samples. Each is the largest ratio times the safety factor.
LipschitzConstants estimate_constants(const VelocityNet& center, const Schedule& s, const CoarseGrid& anchors,
                                      const TrackProbe& probe, double probe_scale, int n_probes, Rng& rng,
                                      std::span<const ParamPair> extra_pairs = {}, double safety = 2.0);

}  // namespace dmdlab
