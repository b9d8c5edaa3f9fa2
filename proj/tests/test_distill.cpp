// Copyright (C) 2026 The dmdlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "dmdlab/errors.hpp"
#include "dmdlab/distill.hpp"
#include "dmdlab/gaussian.hpp"
#include "support.hpp"

using namespace dmdlab;
using dmdlab::testing::central_difference;
using dmdlab::testing::relative_error;

namespace {

VelocityNetConfig tiny_net(int conditions) {
  VelocityNetConfig cfg;
  cfg.width = 16;
  cfg.depth = 2;
  cfg.time_dim = 8;
  cfg.cond_dim = 4;
  cfg.num_conditions = conditions;
  return cfg;
}

DatasetSpec tiny_data() { return standardize(ring_mixture(4, 4.0, 0.3)); }

VelocityNet tiny_teacher(std::uint64_t seed = 1) {
  Rng rng(seed);
  return VelocityNet::init(tiny_net(4), rng);
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.iters = 40;
  cfg.batch = 32;
  cfg.seed = 3;
  cfg.lr_g = 1e-3;
  cfg.lr_fake = 1e-3;
  cfg.lr_d = 1e-3;
  cfg.disc.backbone_width = 16;
  cfg.disc.head_width = 8;
  cfg.disc.feature_dim = 4;
  cfg.eval_every_rounds = 0;
  cfg.eval_samples = 64;
  cfg.eval_reference_samples = 64;
  cfg.teacher_eval_steps = 4;
  cfg.track = false;
  return cfg;
}

bool bit_equal(const ParamVector& a, const ParamVector& b) {
  return a.size() == b.size() && std::memcmp(a.flat().data(), b.flat().data(), sizeof(double) * a.size()) == 0;
}

VelocityField exact_field(const Gaussian2d& g) {
  return [g](const Matrix& x, const Vector& t, std::span<const int>) {
    Matrix v(x.rows(), 2);
    for (Index i = 0; i < x.rows(); ++i) v.row(i) = gaussian_target_field(g, t(i))(x.row(i).transpose()).transpose();
    return v;
  };
}

}  // namespace

TEST_CASE("config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.lambda_ida = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ContractViolation);
  cfg = TrainConfig{};
  cfg.ttur_f = 0;
  CHECK_THROWS_AS(cfg.validate(), ContractViolation);
  cfg = TrainConfig{};
  cfg.backward_sim_prob = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ContractViolation);
  cfg = TrainConfig{};
  cfg.iters = 101;
  cfg.ttur_f = 5;
  CHECK(cfg.generator_rounds() == 21);
}

TEST_CASE("DMD gradient vanishes when fake equals teacher") {
  const VelocityNet teacher = tiny_teacher();
  const VelocityNet gen = tiny_teacher(2);
  Rng rng(4);
  const Matrix x = standard_normal(rng, 16, 2);
  const std::vector<int> cond(16, 1);
  for (auto norm : {DmdNormalizer::kVelocityGap, DmdNormalizer::kX0Gap}) {
    auto [value, g] = value_and_grad(
        [&](Tape& tape, std::span<const Var> p) {
          Var v = gen.forward(tape, p, tape.constant(x), Vector::Constant(16, 0.75), cond);
          Var xh = jump_to_zero(tape.constant(x), v, 0.75);
          return dmd_generator_loss(xh, teacher, teacher, cond, Schedule::fmot(), 0.98, norm, rng);
        },
        gen.params());
    CHECK(value == 0.0);
    CHECK(g.flat().cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("DMD gradient on Gaussian worlds") {
  const Schedule s = Schedule::fmot();
  const Gaussian2d pg{{0.5, -0.2}, Eigen::Matrix2d::Identity() * 0.4};
  const std::vector<int> cond(64, 0);
  Rng rng(5);

  // The gradient of the surrogate with respect to a shift of x0_hat is the mean step.
  auto mean_gradient = [&](const Gaussian2d& pr, int batches, Eigen::Vector2d& se) {
    Matrix g(batches, 2);
    for (int b = 0; b < batches; ++b) {
      Matrix xh = std::sqrt(0.4) * standard_normal(rng, 64, 2);
      xh.rowwise() += pg.mean.transpose();
      const DmdDirection d = dmd_direction(xh, exact_field(pg), exact_field(pr), cond, s, 0.98,
                                           DmdNormalizer::kVelocityGap, rng);
      g.row(b) = d.step.colwise().mean();
    }
    const Eigen::RowVector2d m = g.colwise().mean();
    se = ((g.rowwise() - m).array().square().colwise().sum() / double(batches - 1)).sqrt().transpose() /
         std::sqrt(double(batches));
    return Eigen::Vector2d(m.transpose());
  };

  SUBCASE("p_g equals p_r") {
    Eigen::Vector2d se;
    const Gaussian2d pr{pg.mean, pg.cov};
    const Eigen::Vector2d m = mean_gradient(pr, 50, se);
    CHECK(m.norm() <= 3.0 * se.norm());
  }
  SUBCASE("descent moves p_g toward p_r") {
    Eigen::Vector2d se;
    const Gaussian2d pr{{-1.0, 1.0}, pg.cov};
    const Eigen::Vector2d m = mean_gradient(pr, 50, se);
    CHECK(m.dot(pg.mean - pr.mean) > 0.0);
  }
}

TEST_CASE("one-sample surrogate gradient equals the hand-computed direction") {
  const Schedule s = Schedule::fmot();
  Rng nets(6);
  const VelocityNet fake = VelocityNet::init(tiny_net(1), nets);
  const VelocityNet teacher = VelocityNet::init(tiny_net(1), nets);
  auto layout = std::make_shared<ParamLayout>();
  layout->add("x0", 1, 2);
  Vector theta(2);
  theta << 0.3, -0.7;
  const ParamVector at(layout, theta);
  const std::vector<int> cond{0};

  for (auto norm : {DmdNormalizer::kVelocityGap, DmdNormalizer::kX0Gap}) {
    Rng rng(7), replay(7);
    const ParamVector g = grad(
        [&](Tape&, std::span<const Var> p) {
          return dmd_generator_loss(p[0], fake, teacher, cond, s, 0.98, norm, rng);
        },
        at);

    const double t = uniform(replay, s.t_min, 0.98);
    const Matrix eps = standard_normal(replay, 1, 2);
    Matrix xt(1, 2);
    xt.row(0) = (1.0 - t) * theta.transpose() + t * eps.row(0);
    const Vector tv = Vector::Constant(1, t);
    const Eigen::RowVector2d vf = fake.velocity(xt, tv, cond).row(0);
    const Eigen::RowVector2d vr = teacher.velocity(xt, tv, cond).row(0);
    const Eigen::RowVector2d diff = vf - vr;
    Eigen::RowVector2d expect;
    if (norm == DmdNormalizer::kVelocityGap) {
      const double alpha = 1.0 - t, a = -(1.0 - t) / t;
      expect = alpha * a * diff / (diff.cwiseAbs().mean() + 1e-8);
    } else {
      const Eigen::RowVector2d x0_real = xt.row(0) - t * vr;
      expect = -t * diff / ((theta.transpose() - x0_real).cwiseAbs().mean() + 1e-8);
    }
    CHECK((g.flat().transpose() - expect).norm() < 1e-12 * std::max(1.0, expect.norm()));
  }
}

TEST_CASE("matching direction reports non-finite values with the time") {
  VelocityField bad = [](const Matrix& x, const Vector&, std::span<const int>) {
    return Matrix(Matrix::Constant(x.rows(), x.cols(), std::numeric_limits<double>::infinity()));
  };
  VelocityField zero = [](const Matrix& x, const Vector&, std::span<const int>) {
    return Matrix(Matrix::Zero(x.rows(), x.cols()));
  };
  Rng rng(8);
  const std::vector<int> cond{0};
  try {
    dmd_direction(Matrix::Zero(1, 2), bad, zero, cond, Schedule::fmot(), 0.98, DmdNormalizer::kVelocityGap, rng);
    FAIL("expected NumericFailure");
  } catch (const NumericFailure& e) {
    CHECK(std::string(e.what()).find("t=") != std::string::npos);
  }
}

TEST_CASE("ISG pieces") {
  const std::vector<int> cond(8, 0);
  Rng rng(9);
  const Matrix x = standard_normal(rng, 8, 2);

  SUBCASE("constant field gives zero loss") {
    VelocityField c = [](const Matrix& z, const Vector&, std::span<const int>) {
      Matrix v(z.rows(), 2);
      v.rowwise() = Eigen::RowVector2d(0.3, -0.4);
      return v;
    };
    const IsgTarget tgt = isg_target(c, c, x, 0.75, 0.5, 0.6, cond);
    Tape tape;
    Var xp = tape.constant(generator_step(c, x, 0.75, 0.5, cond));
    CHECK(isg_loss(xp, tgt.x_tar).item() < 1e-30);
  }
  SUBCASE("linear field two-hop discrepancy") {
    VelocityField id = [](const Matrix& z, const Vector&, std::span<const int>) { return z; };
    const IsgTarget tgt = isg_target(id, id, x, 1.0, 0.75, 0.9, cond);
    CHECK((tgt.x_mid - 0.9 * x).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((tgt.x_tar - 0.765 * x).cwiseAbs().maxCoeff() < 1e-15);
    Tape tape;
    Var xp = tape.constant(generator_step(id, x, 1.0, 0.75, cond));
    const double expect = 0.015 * 0.015 * x.rowwise().squaredNorm().mean();
    CHECK(isg_loss(xp, tgt.x_tar).item() == doctest::Approx(expect).epsilon(1e-12));
  }
  SUBCASE("t_mid must lie inside the open segment") {
    VelocityField id = [](const Matrix& z, const Vector&, std::span<const int>) { return z; };
    CHECK_THROWS_AS(isg_target(id, id, x, 1.0, 0.75, 0.75, cond), ContractViolation);
    CHECK_THROWS_AS(isg_target(id, id, x, 1.0, 0.75, 1.0, cond), ContractViolation);
    CHECK_THROWS_AS(isg_target(id, id, x, 1.0, 0.75, 0.5, cond), ContractViolation);
    for (int i = 0; i < 1000; ++i) {
      const double t = sample_isg_time(0.25, 0.5, rng);
      CHECK((t > 0.25 && t < 0.5));
    }
  }
}

TEST_CASE("ISG gradient flows only through the direct hop") {
  Rng rng(10);
  const VelocityNet gen = VelocityNet::init(tiny_net(1), rng);
  const VelocityNet teacher = VelocityNet::init(tiny_net(1), rng);
  const Matrix x = standard_normal(rng, 6, 2);
  const std::vector<int> cond(6, 0);
  const CoarseGrid anchors;
  for (std::size_t i : {std::size_t{0}, std::size_t{2}}) {
    Rng a(11), b(11);
    double t_mid = 0.0;
    const ParamVector g = grad(
        [&](Tape& tape, std::span<const Var> p) {
          return isg_loss(tape, p, gen, teacher, x, i, anchors, cond, a, &t_mid);
        },
        gen.params());
    // Finite differences with the target frozen at the unperturbed generator.
    const double hi = anchors[i], lo = anchors.lower(i);
    CHECK(t_mid == sample_isg_time(lo, hi, b));
    const Matrix x_tar = isg_target(gen.field(), teacher.field(), x, hi, lo, t_mid, cond).x_tar;
    const Vector fd = central_difference(
        [&](const ParamVector& p) {
          const Matrix xp = x + (lo - hi) * gen.velocity(p, x, Vector::Constant(6, hi), cond);
          return (xp - x_tar).rowwise().squaredNorm().mean();
        },
        gen.params());
    CHECK(relative_error(g.flat(), fd) < 1e-4);
  }
}

TEST_CASE("adversarial generator loss") {
  const Schedule s = Schedule::fmot();
  CHECK(adversarial_weight(s, 1.0) == 0.0);
  CHECK(adversarial_weight(s, 0.0) == 1.0);
  CHECK(adversarial_weight(s, 0.25) == 0.5625);
  Tape tape;
  Matrix l(4, 1);
  l << 0.5, -1.0, 2.0, 0.25;
  CHECK(adversarial_g_loss(tape.constant(l), s, 1.0).item() == 0.0);
  const double one = adversarial_g_loss(tape.constant(l), s, 0.5).item();
  const double two = adversarial_g_loss(tape.constant(2.0 * l), s, 0.5).item();
  CHECK(one == doctest::Approx(-0.25 * l.mean()).epsilon(1e-15));
  CHECK(two == doctest::Approx(2.0 * one).epsilon(1e-15));
}

TEST_CASE("hinge discriminator loss") {
  const Vector pos = Vector::Ones(5), neg = -Vector::Ones(5), zero = Vector::Zero(5);
  CHECK(discriminator_loss(pos, neg) == 0.0);
  CHECK(discriminator_loss(zero, zero) == 2.0);
  CHECK(discriminator_loss(neg, pos) == 4.0);
  Tape tape;
  CHECK(discriminator_loss(tape.constant(neg), tape.constant(pos)).item() == 4.0);
  CHECK(discriminator_loss(tape.constant(pos), tape.constant(neg)).item() == 0.0);
}

TEST_CASE("flow-matching regression is zero on a consistent triple") {
  Rng rng(12);
  const VelocityNet fake = VelocityNet::init(tiny_net(1), rng);
  const Schedule s = Schedule::fmot();
  const Matrix xt = standard_normal(rng, 1, 2);
  const double t = 0.35;
  const Vector tv = Vector::Constant(1, t);
  const std::vector<int> cond{0};
  const Matrix v = fake.velocity(xt, tv, cond);
  // Endpoints chosen so x_t is on the path and x1 - x0 equals the prediction.
  const Matrix x0 = xt - t * v;
  const Matrix x1 = xt + (1.0 - t) * v;
  const PathSample path = make_path(s, x0, tv, x1);
  const double loss =
      dmdlab::testing::tape_value([&](Tape& tape, std::span<const Var> p) {
        return flow_matching_loss(tape, p, fake, path, cond);
      }, fake.params());
  CHECK(loss < 1e-28);
}

TEST_CASE("logit-normal sample mean") {
  Rng rng(13);
  const Index n = 100000;
  const Vector t = sample_logit_normal(rng, n, 0.0, 1.0, 1e-3);
  const double m = t.mean();
  const double sd = std::sqrt((t.array() - m).square().sum() / double(n - 1));
  CHECK(std::abs(m - 0.5) < 3.0 * sd / std::sqrt(double(n)));
}

TEST_CASE("IDA update algebra") {
  const VelocityNet teacher = tiny_teacher();
  TrainConfig cfg = tiny_config();
  Rng init(15);
  TrainerState st = TrainerState::init(teacher, cfg, init);
  Rng rng(16);
  st.generator.params().flat() += 0.1 * standard_normal(rng, st.generator.params().size(), 1);
  st.fake.params().flat() += 0.1 * standard_normal(rng, st.fake.params().size(), 1);

  SUBCASE("lambda one is the identity") {
    const ParamVector phi = st.fake.params();
    ida_update(st, 1.0);
    CHECK(bit_equal(st.fake.params(), phi));
  }
  SUBCASE("post-blend gap is lambda times the pre-blend gap") {
    const double gap = param_distance(st.fake.params(), st.generator.params());
    ida_update(st, 0.9);
    CHECK(param_distance(st.fake.params(), st.generator.params()) == doctest::Approx(0.9 * gap).epsilon(1e-12));
  }
  SUBCASE("composition") {
    TrainerState other = st;
    ida_update(st, 0.9);
    ida_update(st, 0.8);
    ida_update(other, 0.72);
    CHECK((st.fake.params().flat() - other.fake.params().flat()).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("optimizer moments are untouched") {
    Rng g(17);
    ParamVector step(st.fake.params().layout_ptr(), standard_normal(g, st.fake.params().size(), 1));
    st.opt_fake.step(st.fake.params(), step);
    const Vector m = st.opt_fake.first_moment(), v = st.opt_fake.second_moment();
    ida_update(st, 0.5);
    CHECK(st.opt_fake.first_moment() == m);
    CHECK(st.opt_fake.second_moment() == v);
  }
}

TEST_CASE("reference samples share the label") {
  const DatasetSpec data = tiny_data();
  Batch b;
  b.x0 = Matrix(5, 2);
  b.x0 << 0, 0, 1, 1, 2, 2, 3, 3, 4, 4;
  b.cond = {0, 1, 0, 0, 2};
  Rng rng(18);
  const Matrix ref = reference_samples(data, b, rng);
  CHECK(ref.row(0) == b.x0.row(2));
  CHECK(ref.row(2) == b.x0.row(3));
  CHECK(ref.row(3) == b.x0.row(0));
  // Singletons get a fresh draw near their own component.
  for (int r : {1, 4}) {
    const Eigen::Vector2d mean = data.components[std::size_t(b.cond[std::size_t(r)])].mean;
    CHECK((ref.row(r).transpose() - mean).norm() < 1.0);
  }
}

TEST_CASE("divergence guard names the iteration and component") {
  CHECK_NOTHROW(check_loss(3.0, 1, "l_dmd"));
  try {
    check_loss(2e6, 42, "l_isg");
    FAIL("expected NumericFailure");
  } catch (const NumericFailure& e) {
    CHECK(e.where() == "iteration 42");
    CHECK(std::string(e.what()).find("l_isg") != std::string::npos);
  }
  CHECK_THROWS_AS(check_loss(std::nan(""), 0, "l_fake"), NumericFailure);
}

TEST_CASE("training counts updates") {
  TrainConfig cfg = tiny_config();
  cfg.iters = 100;
  cfg.ttur_f = 5;
  const TrainLog log = train(cfg, tiny_teacher(), tiny_data());
  CHECK(log.generator_updates == 20);
  CHECK(log.ida_applications == 20);
  CHECK(log.losses.size() == 20);
  CHECK(log.final_state.round == 20);
  CHECK(log.final_state.iter == 100);
  CHECK(log.evals.size() == 1);
  for (const auto& lb : log.losses) {
    CHECK(std::isfinite(lb.l_dmd));
    CHECK(std::isfinite(lb.l_isg));
    CHECK(std::isfinite(lb.l_fake_denoise));
    CHECK(std::isfinite(lb.l_disc));
  }
  cfg.ida_enabled = false;
  CHECK(train(cfg, tiny_teacher(), tiny_data()).ida_applications == 0);
}

TEST_CASE("training is deterministic") {
  TrainConfig cfg = tiny_config();
  cfg.track = true;
  cfg.track_samples = 16;
  cfg.constants_every_rounds = 4;
  cfg.constants_probes = 2;
  const TrainLog a = train(cfg, tiny_teacher(), tiny_data());
  const TrainLog b = train(cfg, tiny_teacher(), tiny_data());
  CHECK(bit_equal(a.final_state.generator.params(), b.final_state.generator.params()));
  CHECK(bit_equal(a.final_state.fake.params(), b.final_state.fake.params()));
  CHECK(bit_equal(a.final_state.disc.head(), b.final_state.disc.head()));
  REQUIRE(a.track.size() == b.track.size());
  for (std::size_t i = 0; i < a.track.size(); ++i) CHECK(a.track[i].delta_k == b.track[i].delta_k);
}

TEST_CASE("vanilla reduction matches a reference loop bit for bit") {
  TrainConfig cfg = tiny_config();
  cfg.lambda_ida = 1.0;
  cfg.lambda_isg = 0.0;
  cfg.lambda_g = 0.0;
  const VelocityNet teacher = tiny_teacher();
  const DatasetSpec data = tiny_data();
  const TrainLog log = train(cfg, teacher, data);

  // Distribution matching with TTUR and nothing else.
  const Schedule& s = cfg.schedule;
  Rng init_rng = derive_stream(cfg.seed, kStreamInit);
  Rng anchor_rng = derive_stream(cfg.seed, kStreamAnchor);
  Rng data_rng = derive_stream(cfg.seed, kStreamData);
  Rng noise_rng = derive_stream(cfg.seed, kStreamNoise);
  Rng sim_rng = derive_stream(cfg.seed, kStreamSim);
  Rng dmd_rng = derive_stream(cfg.seed, kStreamDmd);
  Rng fake_rng = derive_stream(cfg.seed, kStreamFake);
  Rng disc_rng = derive_stream(cfg.seed, kStreamDisc);
  TrainerState st = TrainerState::init(teacher, cfg, init_rng);
  std::uniform_int_distribution<std::size_t> pick(0, 3);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (long long it = 0; it < cfg.iters; ++it) {
    const std::size_t ai = pick(anchor_rng);
    const double tau = cfg.anchors[ai];
    const bool simulate = coin(anchor_rng) < cfg.backward_sim_prob;
    const Batch batch = sample_batch(data, cfg.batch, data_rng);
    const Index n = batch.x0.rows();
    const Matrix x_tau =
        simulate ? backward_simulate(st.generator.field(), s, cfg.anchors, standard_normal(sim_rng, n, 2), tau,
                                     batch.cond, sim_rng)
                 : forward_diffuse(s, batch.x0, tau, standard_normal(noise_rng, n, 2));
    const Matrix ref_feat = st.disc.features(reference_samples(data, batch, disc_rng));
    Matrix x_hat0;
    if (it % cfg.ttur_f == 0) {
      Tape tape;
      const auto gv = tape.bind(st.generator.params(), true);
      Var xt = tape.constant(x_tau);
      Var xh = jump_to_zero(xt, st.generator.forward(tape, gv, xt, Vector::Constant(n, tau), batch.cond), tau);
      x_hat0 = xh.value();
      tape.backward(dmd_generator_loss(xh, st.fake, st.teacher, batch.cond, s, cfg.dmd_t_max, cfg.normalizer, dmd_rng));
      st.opt_g.step(st.generator.params(), tape.gradient(gv, st.generator.params()));
    } else {
      x_hat0 = generator_step(st.generator, x_tau, tau, 0.0, batch.cond);
    }
    const auto [lf, gf] = value_and_grad(
        [&](Tape& tape, std::span<const Var> vars) {
          return fake_denoise_loss(tape, vars, st.fake, x_hat0, batch.cond, s, cfg.logitnormal_mu,
                                   cfg.logitnormal_sigma, fake_rng);
        },
        st.fake.params());
    st.opt_fake.step(st.fake.params(), gf);
    Tape tape;
    const auto bb = tape.bind(st.disc.backbone(), false);
    const auto hv = tape.bind(st.disc.head(), true);
    Var rf = tape.constant(ref_feat);
    Var loss = discriminator_loss(st.disc.logits(tape, bb, hv, tape.constant(batch.x0), batch.cond, rf),
                                  st.disc.logits(tape, bb, hv, tape.constant(x_hat0), batch.cond, rf));
    tape.backward(loss);
    st.opt_d.step(st.disc.head(), tape.gradient(hv, st.disc.head()));
  }
  CHECK(bit_equal(log.final_state.generator.params(), st.generator.params()));
  CHECK(bit_equal(log.final_state.fake.params(), st.fake.params()));
  CHECK(bit_equal(log.final_state.disc.head(), st.disc.head()));
}

TEST_CASE("IDA at lambda one equals IDA off") {
  TrainConfig on = tiny_config();
  on.lambda_ida = 1.0;
  TrainConfig off = on;
  off.ida_enabled = false;
  const TrainLog a = train(on, tiny_teacher(), tiny_data());
  const TrainLog b = train(off, tiny_teacher(), tiny_data());
  CHECK(bit_equal(a.final_state.generator.params(), b.final_state.generator.params()));
  CHECK(bit_equal(a.final_state.fake.params(), b.final_state.fake.params()));
}

TEST_CASE("without the adversarial term the discriminator never reaches the generator") {
  TrainConfig a = tiny_config();
  a.lambda_g = 0.0;
  TrainConfig b = a;
  b.disc.head_width = 24;  // a different discriminator altogether
  const TrainLog la = train(a, tiny_teacher(), tiny_data());
  const TrainLog lb = train(b, tiny_teacher(), tiny_data());
  CHECK(bit_equal(la.final_state.generator.params(), lb.final_state.generator.params()));
  // With the term on, it does.
  a.lambda_g = 0.5;
  b.lambda_g = 0.5;
  CHECK_FALSE(bit_equal(train(a, tiny_teacher(), tiny_data()).final_state.generator.params(),
                        train(b, tiny_teacher(), tiny_data()).final_state.generator.params()));
}

TEST_CASE("tracking records and the blend recursion") {
  TrainConfig cfg = tiny_config();
  cfg.iters = 60;
  cfg.track = true;
  cfg.track_samples = 32;
  cfg.track_C = 0.7;
  cfg.constants_every_rounds = 0;
  const TrainLog log = train(cfg, tiny_teacher(), tiny_data());
  REQUIRE(log.track.size() == 12);
  CHECK(log.track.front().e_pre == 0.0);
  CHECK(log.track.front().delta_pre == 0.0);
  for (const auto& r : log.track) {
    CHECK(r.e_k >= 0.0);
    CHECK(r.delta_k >= 0.0);
    CHECK(r.dbar_k >= 0.0);
    CHECK(r.betabar_k >= 0.0);
    CHECK(r.proxy);
    CHECK(r.eps_k == doctest::Approx(2.0 * 0.7 * (r.dtilde_k * r.dtilde_k + r.betatilde_k * r.betatilde_k)));
  }
  const RecursionReport rep = check_recursions(log.track, cfg.lambda_ida, LipschitzConstants{});
  CHECK(rep.e.pass_fraction() == 1.0);
  CHECK(rep.e.worst_slack >= -kSlackTolerance);
}

TEST_CASE("teacher training") {
  TeacherConfig tc;
  tc.net = tiny_net(4);
  tc.iters = 0;
  tc.seed = 2;
  const VelocityNet init = train_teacher_net(tc, tiny_data());
  Rng rng = derive_stream(2, kStreamInit);
  CHECK(bit_equal(init.params(), VelocityNet::init(init.config(), rng).params()));

  tc.iters = 200;
  tc.batch = 64;
  std::vector<double> trace;
  const VelocityNet a = train_teacher_net(tc, tiny_data(), &trace);
  const VelocityNet b = train_teacher_net(tc, tiny_data());
  CHECK(bit_equal(a.params(), b.params()));
  CHECK(trace.size() == 200);
  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 20; ++i) {
    head += trace[std::size_t(i)];
    tail += trace[trace.size() - 1 - std::size_t(i)];
  }
  CHECK(tail < head);
}
