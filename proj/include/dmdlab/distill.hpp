// Copyright (C) 2026 The dmdlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "dmdlab/data.hpp"
#include "dmdlab/nets.hpp"
#include "dmdlab/optim.hpp"
#include "dmdlab/samplers.hpp"
#include "dmdlab/schedules.hpp"
#include "dmdlab/theorylab.hpp"

namespace dmdlab {

/// Per-sample scaling of the distribution-matching direction.
enum class DmdNormalizer {
  /// a(t) (v_fake - v_real) / (mean_coord |v_fake - v_real| + 1e-8), times alpha_t.
  kVelocityGap,
  /// (x0_fake - x0_real) / (mean_coord |x0_hat - x0_real| + 1e-8), no alpha_t.
  kX0Gap,
};

struct TrainConfig {
  double lambda_ida = 0.95;
  double lambda_isg = 1.0;
  double lambda_g = 0.5;
  int ttur_f = 5;
  double lr_g = 1e-4;
  double lr_fake = 1e-4;
  double lr_d = 1e-4;
  long long iters = 6000;
  Index batch = 256;
  std::uint64_t seed = 0;
  CoarseGrid anchors;
  double logitnormal_mu = 0.0;
  double logitnormal_sigma = 1.0;
  double backward_sim_prob = 0.5;

  Schedule schedule;
  DiscriminatorConfig disc;
  bool ida_enabled = true;  // false skips the blend call entirely
  bool isg_final_hop = true;
  double dmd_t_max = 0.98;
  DmdNormalizer normalizer = DmdNormalizer::kVelocityGap;

  int eval_every_rounds = 25;  // 0 disables periodic FD evaluation
  std::vector<int> extra_eval_rounds;  // 1-based round counts that also get an evaluation
  Index eval_samples = 2048;
  Index eval_reference_samples = 4096;
  int teacher_eval_steps = 32;

  bool track = true;
  Index track_samples = 256;
  double track_C = 1.0;
  int constants_every_rounds = 100;  // 0 disables Lipschitz probing
  int constants_probes = 8;
  double constants_probe_scale = 0.02;

  void validate() const;
  long long generator_rounds() const { return (iters + ttur_f - 1) / ttur_f; }
};

/// Stream ids for derive_stream(seed, id).
enum RngStream : std::uint64_t {
  kStreamAnchor = 1,
  kStreamData = 2,
  kStreamNoise = 3,
  kStreamSim = 4,
  kStreamDmd = 5,
  kStreamIsg = 6,
  kStreamFake = 7,
  kStreamDisc = 8,
  kStreamInit = 9,
  kStreamTrack = 10,
  kStreamEval = 11,
};

struct TrainerState {
  VelocityNet teacher;
  VelocityNet generator;  // theta
  VelocityNet fake;       // phi
  Discriminator disc;
  AdamW opt_g;
  AdamW opt_fake;
  AdamW opt_d;
  long long iter = 0;
  long long round = 0;

  /// theta = phi = teacher; fresh discriminator from rng.
  static TrainerState init(const VelocityNet& teacher, const TrainConfig& cfg, Rng& init_rng);
};

struct LossBreakdown {
  long long iter = 0;
  double l_dmd = 0.0;
  double l_adv_g = 0.0;
  double l_isg = 0.0;
  double l_fake_denoise = 0.0;
  double l_disc = 0.0;
};

struct EvalPoint {
  long long round = 0;  // 1-based count of generator updates so far
  long long iter = 0;
  double fd_to_teacher = 0.0;
  double fd_to_data = 0.0;
};

struct TrainLog {
  std::vector<LossBreakdown> losses;  // one per generator round
  std::vector<TrackRecord> track;     // one per generator round when tracking
  std::vector<EvalPoint> evals;
  std::optional<LipschitzConstants> constants;  // running maxima from the probes
  long long generator_updates = 0;
  long long ida_applications = 0;
  TrainerState final_state;
};

// ---------------------------------------------------------------------------
// Loss pieces. Tape variants return scalar nodes; gradients flow only into
// nodes bound with requires_grad.

/// x0 + (0 - tau) v on the tape: the generator's jump to time 0.
Var jump_to_zero(Var x_tau, Var v, double tau);

struct DmdDirection {
  Matrix step;  // per-sample displacement subtracted from x0_hat inside the stop-gradient
  Vector t;
};

/// Draws t uniform on [t_min, t_max] per sample, re-noises x0_hat and returns
/// the scaled matching direction. Throws NumericFailure naming t when non-finite.
DmdDirection dmd_direction(const Matrix& x_hat0, const VelocityNet& fake, const VelocityNet& teacher,
                           std::span<const int> cond, const Schedule& s, double t_max, DmdNormalizer norm, Rng& rng);
DmdDirection dmd_direction(const Matrix& x_hat0, const VelocityField& fake, const VelocityField& teacher,
                           std::span<const int> cond, const Schedule& s, double t_max, DmdNormalizer norm, Rng& rng);

/// 0.5 mean_b |x0_hat - stopgrad(x0_hat - step)|^2.
Var dmd_surrogate(Var x_hat0, const Matrix& step);

Var dmd_generator_loss(Var x_hat0, const VelocityNet& fake, const VelocityNet& teacher, std::span<const int> cond,
                       const Schedule& s, double t_max, DmdNormalizer norm, Rng& rng);

/// Segment (lower(i), anchors[i]] of anchor index i.
struct IsgTarget {
  double tau_hi = 0.0;
  double tau_lo = 0.0;
  double t_mid = 0.0;
  Matrix x_mid;
  Matrix x_tar;
};

/// Teacher Euler step tau_hi -> t_mid followed by a generator step t_mid -> tau_lo.
IsgTarget isg_target(const VelocityField& generator, const VelocityField& teacher, const Matrix& x_tau, double tau_hi,
                     double tau_lo, double t_mid, std::span<const int> cond);
double sample_isg_time(double tau_lo, double tau_hi, Rng& rng);

/// mean_b |x_pred - x_tar|^2 with x_tar a constant.
Var isg_loss(Var x_pred, const Matrix& x_tar);

/// Whole term with the generator parameters bound on the tape.
Var isg_loss(Tape& tape, std::span<const Var> generator_vars, const VelocityNet& generator, const VelocityNet& teacher,
             const Matrix& x_tau, std::size_t i, const CoarseGrid& anchors, std::span<const int> cond, Rng& rng,
             double* t_mid_out = nullptr);

/// alpha_t^2.
double adversarial_weight(const Schedule& s, double tau);
Var adversarial_g_loss(Var logits, const Schedule& s, double tau);
double adversarial_g_loss(const Discriminator& d, const Matrix& x_hat0, std::span<const int> cond, const Matrix& x_ref,
                          const Schedule& s, double tau);

Var discriminator_loss(Var logits_real, Var logits_fake);
double discriminator_loss(const Vector& logits_real, const Vector& logits_fake);

/// Flow-matching regression mean_b |v(x_t, t) - v_target|^2 on a fixed path.
Var flow_matching_loss(Tape& tape, std::span<const Var> vars, const VelocityNet& net, const PathSample& path,
                       std::span<const int> cond);

/// Logit-normal times, fresh noise, then flow_matching_loss on the detached x.
Var fake_denoise_loss(Tape& tape, std::span<const Var> vars, const VelocityNet& fake, const Matrix& x,
                      std::span<const int> cond, const Schedule& s, double mu, double sigma, Rng& rng);

/// phi <- lambda phi + (1 - lambda) theta. Optimizer moments are not touched.
void ida_update(TrainerState& state, double lambda_ida);

/// Row j's reference is another row with the same label; rows whose label is
/// unique in the batch get a fresh draw from that label.
Matrix reference_samples(const DatasetSpec& data, const Batch& batch, Rng& rng);

/// Anchor sampler: Euler over {tau_4, ..., tau_1, 0}.
Matrix anchor_sample(const VelocityField& generator, const CoarseGrid& anchors, const Matrix& z,
                     std::span<const int> cond);

/// Guard: throws NumericFailure naming the iteration and the component.
void check_loss(double value, long long iter, const char* component);

using RoundCallback = std::function<void(const TrainLog&)>;

TrainLog train(const TrainConfig& cfg, const VelocityNet& teacher, const DatasetSpec& data,
               const RoundCallback& on_round = {});

// ---------------------------------------------------------------------------

struct TeacherConfig {
  VelocityNetConfig net;
  long long iters = 20000;
  Index batch = 256;
  double lr = 1e-3;
  double lr_final = 1e-4;  // cosine decay endpoint
  std::uint64_t seed = 0;
  Schedule schedule;

  void validate() const;
};

VelocityNet train_teacher_net(const TeacherConfig& cfg, const DatasetSpec& data,
                              std::vector<double>* loss_trace = nullptr);

}  // namespace dmdlab
