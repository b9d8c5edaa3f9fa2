// Copyright (C) 2026 The dmdlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmdlab/distill.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>
#include <string>

#include "dmdlab/errors.hpp"
#include "dmdlab/metrics.hpp"

namespace dmdlab {

inline constexpr std::uint64_t kStreamConstants = 12;

void TrainConfig::validate() const {
  DMDLAB_REQUIRE(lambda_ida > 0.0 && lambda_ida <= 1.0, "lambda_ida must lie in (0, 1]");
  DMDLAB_REQUIRE(lambda_isg >= 0.0, "lambda_isg must be nonnegative");
  DMDLAB_REQUIRE(lambda_g >= 0.0, "lambda_g must be nonnegative");
  DMDLAB_REQUIRE(ttur_f >= 1, "ttur_f must be at least 1");
  DMDLAB_REQUIRE(backward_sim_prob >= 0.0 && backward_sim_prob <= 1.0, "backward_sim_prob must lie in [0, 1]");
  DMDLAB_REQUIRE(lr_g > 0.0 && lr_fake > 0.0 && lr_d > 0.0, "learning rates must be positive");
  DMDLAB_REQUIRE(iters >= 0 && batch >= 2, "iters must be nonnegative and batch at least 2");
  DMDLAB_REQUIRE(logitnormal_sigma > 0.0, "logitnormal_sigma must be positive");
  DMDLAB_REQUIRE(dmd_t_max > schedule.t_min && dmd_t_max <= 1.0, "dmd_t_max must lie in (t_min, 1]");
  DMDLAB_REQUIRE(schedule.kind == ScheduleKind::kFmot, "distillation needs the FM-OT path");
  DMDLAB_REQUIRE(eval_every_rounds >= 0 && eval_samples >= 32 && eval_reference_samples >= 32,
                 "evaluation needs at least 32 samples");
  DMDLAB_REQUIRE(track_samples >= 2 && track_C >= 0.0, "bad tracking settings");
  DMDLAB_REQUIRE(constants_every_rounds >= 0 && constants_probes >= 0 && constants_probe_scale > 0.0,
                 "bad constant-probe settings");
}

TrainerState TrainerState::init(const VelocityNet& teacher, const TrainConfig& cfg, Rng& init_rng) {
  TrainerState s;
  s.teacher = teacher;
  s.generator = teacher;
  s.fake = teacher;
  DiscriminatorConfig dc = cfg.disc;
  dc.data_dim = teacher.config().data_dim;
  dc.num_conditions = teacher.config().num_conditions;
  s.disc = Discriminator::init(dc, init_rng);
  s.opt_g = AdamW({.lr = cfg.lr_g});
  s.opt_fake = AdamW({.lr = cfg.lr_fake});
  s.opt_d = AdamW({.lr = cfg.lr_d});
  return s;
}

// ---------------------------------------------------------------------------

Var jump_to_zero(Var x_tau, Var v, double tau) { return x_tau + v * (0.0 - tau); }

DmdDirection dmd_direction(const Matrix& x_hat0, const VelocityNet& fake, const VelocityNet& teacher,
                           std::span<const int> cond, const Schedule& s, double t_max, DmdNormalizer norm, Rng& rng) {
  return dmd_direction(x_hat0, fake.field(), teacher.field(), cond, s, t_max, norm, rng);
}

DmdDirection dmd_direction(const Matrix& x_hat0, const VelocityField& fake, const VelocityField& teacher,
                           std::span<const int> cond, const Schedule& s, double t_max, DmdNormalizer norm, Rng& rng) {
  const Index n = x_hat0.rows();
  DmdDirection out;
  out.t.resize(n);
  for (Index i = 0; i < n; ++i) out.t(i) = uniform(rng, s.t_min, t_max);
  const Matrix noise = standard_normal(rng, n, x_hat0.cols());
  const Matrix xt = forward_diffuse(s, x_hat0, out.t, noise);
  const Matrix vf = fake(xt, out.t, cond);
  const Matrix vr = teacher(xt, out.t, cond);
  const Matrix diff = vf - vr;
  out.step.resize(n, x_hat0.cols());
  for (Index i = 0; i < n; ++i) {
    const double t = out.t(i);
    if (norm == DmdNormalizer::kVelocityGap) {
      const double w = alpha_sigma(s, t).alpha * score_velocity_factor(s, t) / (diff.row(i).cwiseAbs().mean() + 1e-8);
      out.step.row(i) = w * diff.row(i);
    } else {
      const auto x0_real = xt.row(i) - t * vr.row(i);
      const double den = (x_hat0.row(i) - x0_real).cwiseAbs().mean() + 1e-8;
      out.step.row(i) = (-t / den) * diff.row(i);
    }
    if (!out.step.row(i).allFinite()) {
      std::ostringstream os;
      os << "non-finite matching direction at t=" << t;
      throw NumericFailure("dmd_generator_loss", os.str());
    }
  }
  return out;
}

Var dmd_surrogate(Var x_hat0, const Matrix& step) {
  DMDLAB_REQUIRE(step.rows() == x_hat0.rows() && step.cols() == x_hat0.cols(), "dmd_surrogate: shape mismatch");
  Tape& tape = *x_hat0.tape;
  Var target = tape.constant(x_hat0.value() - step);
  return sum(square(x_hat0 - target)) * (0.5 / static_cast<double>(x_hat0.rows()));
}

Var dmd_generator_loss(Var x_hat0, const VelocityNet& fake, const VelocityNet& teacher, std::span<const int> cond,
                       const Schedule& s, double t_max, DmdNormalizer norm, Rng& rng) {
  const DmdDirection d = dmd_direction(x_hat0.value(), fake, teacher, cond, s, t_max, norm, rng);
  return dmd_surrogate(x_hat0, d.step);
}

IsgTarget isg_target(const VelocityField& generator, const VelocityField& teacher, const Matrix& x_tau, double tau_hi,
                     double tau_lo, double t_mid, std::span<const int> cond) {
  DMDLAB_REQUIRE(tau_lo < t_mid && t_mid < tau_hi, "isg: t_mid must lie strictly inside the segment");
  IsgTarget out;
  out.tau_hi = tau_hi;
  out.tau_lo = tau_lo;
  out.t_mid = t_mid;
  out.x_mid = generator_step(teacher, x_tau, tau_hi, t_mid, cond);
  out.x_tar = generator_step(generator, out.x_mid, t_mid, tau_lo, cond);
  return out;
}

double sample_isg_time(double tau_lo, double tau_hi, Rng& rng) {
  DMDLAB_REQUIRE(tau_lo < tau_hi, "isg: empty segment");
  for (;;) {
    const double t = uniform(rng, tau_lo, tau_hi);
    if (t > tau_lo && t < tau_hi) return t;
  }
}

Var isg_loss(Var x_pred, const Matrix& x_tar) {
  DMDLAB_REQUIRE(x_tar.rows() == x_pred.rows() && x_tar.cols() == x_pred.cols(), "isg_loss: shape mismatch");
  Var target = x_pred.tape->constant(x_tar);
  return sum(square(x_pred - target)) * (1.0 / static_cast<double>(x_pred.rows()));
}

Var isg_loss(Tape& tape, std::span<const Var> generator_vars, const VelocityNet& generator, const VelocityNet& teacher,
             const Matrix& x_tau, std::size_t i, const CoarseGrid& anchors, std::span<const int> cond, Rng& rng,
             double* t_mid_out) {
  DMDLAB_REQUIRE(i < CoarseGrid::size(), "isg_loss: segment index out of range");
  const double hi = anchors[i];
  const double lo = anchors.lower(i);
  const double t_mid = sample_isg_time(lo, hi, rng);
  if (t_mid_out) *t_mid_out = t_mid;
  const IsgTarget target = isg_target(generator.field(), teacher.field(), x_tau, hi, lo, t_mid, cond);
  Var x = tape.constant(x_tau);
  Var v = generator.forward(tape, generator_vars, x, Vector::Constant(x_tau.rows(), hi), cond);
  return isg_loss(x + v * (lo - hi), target.x_tar);
}

double adversarial_weight(const Schedule& s, double tau) {
  const double a = alpha_sigma(s, tau).alpha;
  return a * a;
}

Var adversarial_g_loss(Var logits, const Schedule& s, double tau) {
  return mean(logits) * (-adversarial_weight(s, tau));
}

double adversarial_g_loss(const Discriminator& d, const Matrix& x_hat0, std::span<const int> cond, const Matrix& x_ref,
                          const Schedule& s, double tau) {
  return -adversarial_weight(s, tau) * discriminate(d, x_hat0, cond, x_ref).mean();
}

Var discriminator_loss(Var logits_real, Var logits_fake) {
  return mean(clamp_min(1.0 - logits_real, 0.0)) + mean(clamp_min(logits_fake + 1.0, 0.0));
}

double discriminator_loss(const Vector& logits_real, const Vector& logits_fake) {
  return (1.0 - logits_real.array()).max(0.0).mean() + (1.0 + logits_fake.array()).max(0.0).mean();
}

Var flow_matching_loss(Tape& tape, std::span<const Var> vars, const VelocityNet& net, const PathSample& path,
                       std::span<const int> cond) {
  Var v = net.forward(tape, vars, tape.constant(path.xt), path.t, cond);
  return sum(square(v - tape.constant(path.v_target))) * (1.0 / static_cast<double>(path.xt.rows()));
}

Var fake_denoise_loss(Tape& tape, std::span<const Var> vars, const VelocityNet& fake, const Matrix& x,
                      std::span<const int> cond, const Schedule& s, double mu, double sigma, Rng& rng) {
  const Vector t = sample_logit_normal(rng, x.rows(), mu, sigma, s.t_min);
  const PathSample path = make_path(s, x, t, rng);
  return flow_matching_loss(tape, vars, fake, path, cond);
}

void ida_update(TrainerState& state, double lambda_ida) {
  state.fake.set_params(blend_params(state.fake.params(), state.generator.params(), lambda_ida));
}

Matrix reference_samples(const DatasetSpec& data, const Batch& batch, Rng& rng) {
  std::map<int, std::vector<Index>> groups;
  for (Index i = 0; i < batch.x0.rows(); ++i) groups[batch.cond[static_cast<std::size_t>(i)]].push_back(i);
  Matrix ref(batch.x0.rows(), batch.x0.cols());
  for (const auto& [label, rows] : groups) {
    if (rows.size() == 1) {
      ref.row(rows[0]) = sample_condition(data, label, 1, rng).row(0);
      continue;
    }
    for (std::size_t j = 0; j < rows.size(); ++j) ref.row(rows[j]) = batch.x0.row(rows[(j + 1) % rows.size()]);
  }
  return ref;
}

Matrix anchor_sample(const VelocityField& generator, const CoarseGrid& anchors, const Matrix& z,
                     std::span<const int> cond) {
  const std::vector<double> grid{anchors[3], anchors[2], anchors[1], anchors[0], 0.0};
  return euler_sample(generator, grid, z, cond);
}

void check_loss(double value, long long iter, const char* component) {
  if (!std::isfinite(value) || value > 1e6) {
    std::ostringstream where, what;
    where << "iteration " << iter;
    what << component << " = " << value;
    throw NumericFailure(where.str(), what.str());
  }
}

// ---------------------------------------------------------------------------

namespace {

struct EvalSet {
  Matrix z;
  std::vector<int> cond;
  Matrix teacher_ref;
  Matrix data_ref;
};

EvalSet make_eval_set(const TrainConfig& cfg, const VelocityNet& teacher, const DatasetSpec& data) {
  Rng rng = derive_stream(cfg.seed, kStreamEval);
  EvalSet e;
  e.cond = sample_batch(data, cfg.eval_samples, rng).cond;
  e.z = standard_normal(rng, cfg.eval_samples, 2);
  const Batch ref = sample_batch(data, cfg.eval_reference_samples, rng);
  const Matrix zr = standard_normal(rng, cfg.eval_reference_samples, 2);
  e.teacher_ref = euler_sample(teacher.field(), uniform_grid(cfg.teacher_eval_steps), zr, ref.cond);
  e.data_ref = sample_batch(data, cfg.eval_reference_samples, rng).x0;
  return e;
}

bool eval_due(const TrainConfig& cfg, long long round, long long total) {
  if (round == total) return true;
  if (cfg.eval_every_rounds > 0 && round % cfg.eval_every_rounds == 0) return true;
  return std::find(cfg.extra_eval_rounds.begin(), cfg.extra_eval_rounds.end(), round) != cfg.extra_eval_rounds.end();
}

void merge_max(std::optional<LipschitzConstants>& acc, const LipschitzConstants& c) {
  if (!acc) {
    acc = c;
    return;
  }
  acc->L = std::max(acc->L, c.L);
  acc->C_v = std::max(acc->C_v, c.C_v);
  acc->C_vhat = std::max(acc->C_vhat, c.C_vhat);
}

}  // namespace

TrainLog train(const TrainConfig& cfg, const VelocityNet& teacher, const DatasetSpec& data,
               const RoundCallback& on_round) {
  cfg.validate();
  data.validate();
  DMDLAB_REQUIRE(teacher.config().num_conditions == data.num_conditions(),
                 "train: teacher and dataset disagree on the number of conditions");
  const Schedule& s = cfg.schedule;

  Rng init_rng = derive_stream(cfg.seed, kStreamInit);
  Rng anchor_rng = derive_stream(cfg.seed, kStreamAnchor);
  Rng data_rng = derive_stream(cfg.seed, kStreamData);
  Rng noise_rng = derive_stream(cfg.seed, kStreamNoise);
  Rng sim_rng = derive_stream(cfg.seed, kStreamSim);
  Rng dmd_rng = derive_stream(cfg.seed, kStreamDmd);
  Rng isg_rng = derive_stream(cfg.seed, kStreamIsg);
  Rng fake_rng = derive_stream(cfg.seed, kStreamFake);
  Rng disc_rng = derive_stream(cfg.seed, kStreamDisc);
  Rng track_rng = derive_stream(cfg.seed, kStreamTrack);
  Rng const_rng = derive_stream(cfg.seed, kStreamConstants);

  TrainLog log;
  TrainerState st = TrainerState::init(teacher, cfg, init_rng);
  const long long total_rounds = cfg.generator_rounds();
  EvalSet eval;
  if (total_rounds > 0) eval = make_eval_set(cfg, teacher, data);
  TrackProbe probe;
  if (cfg.track) probe = make_track_probe(cfg.track_samples, teacher.config().num_conditions, s, track_rng);

  std::uniform_int_distribution<std::size_t> pick_anchor(0, CoarseGrid::size() - 1);
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  for (long long it = 0; it < cfg.iters; ++it) {
    st.iter = it;
    const std::size_t ai = pick_anchor(anchor_rng);
    const double tau = cfg.anchors[ai];
    const bool simulate = coin(anchor_rng) < cfg.backward_sim_prob;

    const Batch batch = sample_batch(data, cfg.batch, data_rng);
    const Index n = batch.x0.rows();
    Matrix x_tau;
    if (simulate) {
      const Matrix z = standard_normal(sim_rng, n, 2);
      x_tau = backward_simulate(st.generator.field(), s, cfg.anchors, z, tau, batch.cond, sim_rng);
    } else {
      x_tau = forward_diffuse(s, batch.x0, tau, standard_normal(noise_rng, n, 2));
    }
    const Matrix x_ref = reference_samples(data, batch, disc_rng);
    const Matrix ref_feat = st.disc.features(x_ref);

    LossBreakdown lb;
    lb.iter = it;
    Matrix x_hat0;
    const bool gen_round = it % cfg.ttur_f == 0;
    if (gen_round) {
      const ParamVector theta_prev = st.generator.params();
      TrackRecord pre;
      if (cfg.track) pre = measure_tracking(st.generator, st.fake, s, cfg.anchors, probe, cfg.track_C);

      Tape tape;
      const auto gv = tape.bind(st.generator.params(), true);
      Var xt = tape.constant(x_tau);
      Var v = st.generator.forward(tape, gv, xt, Vector::Constant(n, tau), batch.cond);
      Var xh = jump_to_zero(xt, v, tau);
      x_hat0 = xh.value();

      Var total = dmd_generator_loss(xh, st.fake, st.teacher, batch.cond, s, cfg.dmd_t_max, cfg.normalizer, dmd_rng);
      lb.l_dmd = total.item();
      check_loss(lb.l_dmd, it, "l_dmd");
      if (cfg.lambda_g > 0.0) {
        const auto bb = tape.bind(st.disc.backbone(), false);
        const auto hv = tape.bind(st.disc.head(), false);
        Var logits = st.disc.logits(tape, bb, hv, xh, batch.cond, tape.constant(ref_feat));
        Var adv = adversarial_g_loss(logits, s, tau);
        lb.l_adv_g = adv.item();
        total = total + adv * cfg.lambda_g;
      } else {
        lb.l_adv_g = adversarial_g_loss(st.disc, x_hat0, batch.cond, x_ref, s, tau);
      }
      check_loss(std::abs(lb.l_adv_g), it, "l_adv_g");
      if (cfg.lambda_isg > 0.0 && (ai > 0 || cfg.isg_final_hop)) {
        const double lo = cfg.anchors.lower(ai);
        const double t_mid = sample_isg_time(lo, tau, isg_rng);
        const IsgTarget tgt = isg_target(st.generator.field(), st.teacher.field(), x_tau, tau, lo, t_mid, batch.cond);
        Var isg = isg_loss(xt + v * (lo - tau), tgt.x_tar);
        lb.l_isg = isg.item();
        check_loss(lb.l_isg, it, "l_isg");
        total = total + isg * cfg.lambda_isg;
      }
      tape.backward(total);
      const ParamVector g = tape.gradient(gv, st.generator.params());
      if (!g.flat().allFinite()) throw NumericFailure("iteration " + std::to_string(it), "generator gradient");
      st.opt_g.step(st.generator.params(), g);
      ++log.generator_updates;

      if (cfg.ida_enabled) {
        ida_update(st, cfg.lambda_ida);
        ++log.ida_applications;
      }
      ++st.round;

      if (cfg.track) {
        TrackRecord post = measure_tracking(st.generator, st.fake, s, cfg.anchors, probe, cfg.track_C);
        post.k = st.round - 1;
        post.theta_step = param_distance(st.generator.params(), theta_prev);
        post.e_pre = pre.e_k;
        post.delta_pre = pre.delta_k;
        post.dbar_pre = pre.dbar_k;
        post.betabar_pre = pre.betabar_k;
        log.track.push_back(post);
        if (cfg.constants_every_rounds > 0 && st.round % cfg.constants_every_rounds == 0) {
          const std::vector<ParamPair> pairs{{theta_prev, st.generator.params()},
                                             {theta_prev, st.fake.params()},
                                             {st.fake.params(), st.generator.params()}};
          merge_max(log.constants, estimate_constants(st.generator, s, cfg.anchors, probe,
                                                      cfg.constants_probe_scale, cfg.constants_probes, const_rng,
                                                      pairs));
        }
      }
    } else {
      x_hat0 = generator_step(st.generator, x_tau, tau, 0.0, batch.cond);
    }

    {
      const auto [l, g] = value_and_grad(
          [&](Tape& tape, std::span<const Var> vars) {
            return fake_denoise_loss(tape, vars, st.fake, x_hat0, batch.cond, s, cfg.logitnormal_mu,
                                     cfg.logitnormal_sigma, fake_rng);
          },
          st.fake.params());
      lb.l_fake_denoise = l;
      check_loss(l, it, "l_fake");
      st.opt_fake.step(st.fake.params(), g);
    }
    {
      Tape tape;
      const auto bb = tape.bind(st.disc.backbone(), false);
      const auto hv = tape.bind(st.disc.head(), true);
      Var rf = tape.constant(ref_feat);
      Var real = st.disc.logits(tape, bb, hv, tape.constant(batch.x0), batch.cond, rf);
      Var fake = st.disc.logits(tape, bb, hv, tape.constant(x_hat0), batch.cond, rf);
      Var loss = discriminator_loss(real, fake);
      lb.l_disc = loss.item();
      check_loss(lb.l_disc, it, "l_disc");
      tape.backward(loss);
      st.opt_d.step(st.disc.head(), tape.gradient(hv, st.disc.head()));
    }

    if (gen_round) {
      log.losses.push_back(lb);
      if (eval_due(cfg, st.round, total_rounds)) {
        const Matrix samples = anchor_sample(st.generator.field(), cfg.anchors, eval.z, eval.cond);
        log.evals.push_back({st.round, it, frechet_gaussian_distance(samples, eval.teacher_ref),
                             frechet_gaussian_distance(samples, eval.data_ref)});
      }
      if (on_round) on_round(log);
    }
  }
  st.iter = cfg.iters;
  log.final_state = std::move(st);
  return log;
}

// ---------------------------------------------------------------------------

void TeacherConfig::validate() const {
  DMDLAB_REQUIRE(iters >= 0 && batch >= 2, "teacher: iters must be nonnegative and batch at least 2");
  DMDLAB_REQUIRE(lr > 0.0 && lr_final > 0.0, "teacher: learning rates must be positive");
  DMDLAB_REQUIRE(net.depth >= 1 && net.width >= 1, "teacher: bad network shape");
}

VelocityNet train_teacher_net(const TeacherConfig& cfg, const DatasetSpec& data, std::vector<double>* loss_trace) {
  cfg.validate();
  data.validate();
  VelocityNetConfig nc = cfg.net;
  nc.num_conditions = data.num_conditions();
  Rng init_rng = derive_stream(cfg.seed, kStreamInit);
  Rng data_rng = derive_stream(cfg.seed, kStreamData);
  Rng noise_rng = derive_stream(cfg.seed, kStreamNoise);
  VelocityNet net = VelocityNet::init(nc, init_rng);
  AdamW opt({.lr = cfg.lr});
  const Schedule& s = cfg.schedule;
  for (long long it = 0; it < cfg.iters; ++it) {
    const double frac = static_cast<double>(it) / static_cast<double>(cfg.iters);
    opt.set_lr(cfg.lr_final + 0.5 * (cfg.lr - cfg.lr_final) * (1.0 + std::cos(std::numbers::pi * frac)));
    const Batch b = sample_batch(data, cfg.batch, data_rng);
    Vector t(b.x0.rows());
    for (Index i = 0; i < t.size(); ++i) t(i) = uniform(noise_rng, s.t_min, 1.0);
    const PathSample path = make_path(s, b.x0, t, noise_rng);
    const auto [l, g] = value_and_grad(
        [&](Tape& tape, std::span<const Var> vars) { return flow_matching_loss(tape, vars, net, path, b.cond); },
        net.params());
    check_loss(l, it, "l_teacher");
    if (loss_trace) loss_trace->push_back(l);
    opt.step(net.params(), g);
  }
  return net;
}

}  // namespace dmdlab
