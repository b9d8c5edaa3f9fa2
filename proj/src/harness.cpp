// Copyright (C) 2026 The dmdlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmdlab/harness.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>

#include "dmdlab/charts.hpp"
#include "dmdlab/checkpoint.hpp"
#include "dmdlab/errors.hpp"
#include "dmdlab/theorylab.hpp"

namespace dmdlab {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) { return format_double(v); }
std::string fmt(long long v) { return std::to_string(v); }
std::string fmt_opt(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

void write_manifest(const fs::path& dir, const Json& config, const std::string& started,
                    std::vector<std::pair<std::string, std::string>> outputs) {
  RunManifest m;
  m.config_hash = config_hash(config);
  m.code_version = code_version();
  m.started = started;
  m.finished = utc_timestamp();
  m.outputs = std::move(outputs);
  write_text(dir / "manifest.json", canonical_dump(m.to_json()));
}

Json snapshot(const ExperimentConfig& cfg, const TrainConfig& tc) {
  ExperimentConfig c = cfg;
  c.train = tc;
  c.seeds = {tc.seed};
  return to_json(c);
}

}  // namespace

double teacher_fd_to_data(const VelocityNet& teacher, const DatasetSpec& data, std::uint64_t seed, Index n) {
  Rng rng = derive_stream(seed, kStreamEval);
  const Batch b = sample_batch(data, n, rng);
  const Matrix z = standard_normal(rng, n, 2);
  const Matrix x = euler_sample(teacher.field(), uniform_grid(32), z, b.cond);
  return frechet_gaussian_distance(x, sample_batch(data, n, rng).x0);
}

TeacherResult train_teacher(const ExperimentConfig& cfg, std::uint64_t seed, const fs::path& dir, bool overwrite) {
  prepare_run_dir(dir, overwrite);
  const std::string started = utc_timestamp();
  const DatasetSpec data = build_dataset(cfg.dataset);
  TeacherConfig tc = cfg.teacher;
  tc.seed = seed;
  std::vector<double> trace;
  TeacherResult r;
  r.net = train_teacher_net(tc, data, &trace);
  r.checkpoint = dir / "teacher.ckpt";
  save_checkpoint(r.checkpoint, to_checkpoint(r.net));
  r.fd_to_data = teacher_fd_to_data(r.net, data, seed);

  CsvTable log{{"iter", "loss"}, {}};
  for (std::size_t i = 0; i < trace.size(); ++i)
    if (i % 100 == 0 || i + 1 == trace.size()) log.add_row({std::to_string(i), fmt(trace[i])});
  write_csv(dir / "teacher_log.csv", log);
  CsvTable rep{{"seed", "iters", "fd_to_data"}, {}};
  rep.add_row({std::to_string(seed), std::to_string(tc.iters), fmt(r.fd_to_data)});
  write_csv(dir / "teacher_report.csv", rep);

  ExperimentConfig c = cfg;
  c.seeds = {seed};
  const Json j = to_json(c);
  write_text(dir / "config.json", canonical_dump(j));
  write_manifest(dir, j, started, {{"checkpoint", r.checkpoint.string()}, {"log", (dir / "teacher_log.csv").string()}});
  return r;
}

VelocityNet obtain_teacher(const ExperimentConfig& cfg, const fs::path& dir, bool overwrite) {
  if (!cfg.teacher_checkpoint.empty()) return velocity_net_from(load_checkpoint(cfg.teacher_checkpoint));
  return train_teacher(cfg, cfg.seeds.front(), dir, overwrite).net;
}

CsvTable train_log_table(const TrainLog& log) {
  CsvTable t{{"iter", "l_dmd", "l_adv_g", "l_isg", "l_fake", "l_disc", "e_k", "delta_k", "dbar_k", "betabar_k",
              "fd_to_teacher"},
             {}};
  std::size_t ev = 0;
  for (std::size_t i = 0; i < log.losses.size(); ++i) {
    const LossBreakdown& l = log.losses[i];
    std::vector<std::string> row{fmt(l.iter),  fmt(l.l_dmd),          fmt(l.l_adv_g), fmt(l.l_isg),
                                 fmt(l.l_fake_denoise), fmt(l.l_disc)};
    if (i < log.track.size()) {
      const TrackRecord& r = log.track[i];
      for (double v : {r.e_k, r.delta_k, r.dbar_k, r.betabar_k}) row.push_back(fmt(v));
    } else {
      row.insert(row.end(), 4, "");
    }
    const long long round = static_cast<long long>(i) + 1;
    while (ev < log.evals.size() && log.evals[ev].round < round) ++ev;
    row.push_back(ev < log.evals.size() && log.evals[ev].round == round ? fmt(log.evals[ev].fd_to_teacher) : "");
    t.add_row(std::move(row));
  }
  return t;
}

CsvTable track_table(const TrainLog& log) {
  CsvTable t{{"k", "e_k", "delta_k", "dbar_k", "betabar_k", "dtilde_k", "betatilde_k", "eps_k", "kl_gf", "kl_gr",
              "theta_step", "e_pre", "delta_pre", "dbar_pre", "betabar_pre", "proxy"},
             {}};
  for (const TrackRecord& r : log.track) {
    t.add_row({fmt(r.k), fmt(r.e_k), fmt(r.delta_k), fmt(r.dbar_k), fmt(r.betabar_k), fmt(r.dtilde_k),
               fmt(r.betatilde_k), fmt(r.eps_k), fmt_opt(r.kl_gf), fmt_opt(r.kl_gr), fmt(r.theta_step), fmt(r.e_pre),
               fmt(r.delta_pre), fmt(r.dbar_pre), fmt(r.betabar_pre), r.proxy ? "1" : "0"});
  }
  return t;
}

CsvTable evals_table(const TrainLog& log) {
  CsvTable t{{"round", "iter", "fd_to_teacher", "fd_to_data"}, {}};
  for (const EvalPoint& e : log.evals)
    t.add_row({fmt(e.round), fmt(e.iter), fmt(e.fd_to_teacher), fmt(e.fd_to_data)});
  return t;
}

RunResult run_distill(const ExperimentConfig& cfg, const TrainConfig& tc, const VelocityNet& teacher,
                      const fs::path& dir, bool overwrite) {
  prepare_run_dir(dir, overwrite);
  const std::string started = utc_timestamp();
  const Json j = snapshot(cfg, tc);
  write_text(dir / "config.json", canonical_dump(j));
  RunResult r;
  r.dir = dir;
  r.log = train(tc, teacher, build_dataset(cfg.dataset));
  write_csv(dir / "train_log.csv", train_log_table(r.log));
  write_csv(dir / "track.csv", track_table(r.log));
  write_csv(dir / "evals.csv", evals_table(r.log));
  if (r.log.constants) {
    CsvTable c{{"L", "C_v", "C_vhat"}, {}};
    c.add_row({fmt(r.log.constants->L), fmt(r.log.constants->C_v), fmt(r.log.constants->C_vhat)});
    write_csv(dir / "constants.csv", c);
  }
  save_checkpoint(dir / "generator.ckpt", to_checkpoint(r.log.final_state.generator));
  save_checkpoint(dir / "fake.ckpt", to_checkpoint(r.log.final_state.fake));
  save_checkpoint(dir / "discriminator.ckpt", to_checkpoint(r.log.final_state.disc));
  write_manifest(dir, j, started,
                 {{"train_log", (dir / "train_log.csv").string()},
                  {"track", (dir / "track.csv").string()},
                  {"evals", (dir / "evals.csv").string()},
                  {"generator", (dir / "generator.ckpt").string()}});
  return r;
}

double trailing_fd_std(const std::vector<EvalPoint>& evals, long long total_rounds, double fraction) {
  const double cut = (1.0 - fraction) * static_cast<double>(total_rounds);
  std::vector<double> v;
  for (const EvalPoint& e : evals)
    if (static_cast<double>(e.round) > cut) v.push_back(e.fd_to_teacher);
  if (v.size() < 2) return 0.0;
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

std::vector<IdaTturCell> run_ablation_ida_ttur(const ExperimentConfig& cfg, const VelocityNet& teacher,
                                               const fs::path& out, bool overwrite) {
  prepare_run_dir(out, overwrite);
  std::vector<IdaTturCell> cells;
  CsvTable summary{{"ttur", "ida", "seed", "terminal_fd", "trailing_std", "generator_updates", "run_dir"}, {}};
  CsvTable curves{{"cell", "round", "fd_to_teacher"}, {}};
  for (int f : cfg.ablation.ttur_values) {
    for (bool ida : {true, false}) {
      for (std::uint64_t seed : cfg.seeds) {
        TrainConfig tc = cfg.train;
        tc.ttur_f = f;
        tc.seed = seed;
        tc.ida_enabled = ida;
        tc.lambda_ida = ida ? cfg.ablation.ida_lambda : 1.0;
        std::ostringstream name;
        name << "ttur" << f << "_" << (ida ? "ida" : "noida") << "_s" << seed;
        std::cerr << "[ablate-ida-ttur] " << name.str() << "\n";
        RunResult r = run_distill(cfg, tc, teacher, out / name.str(), overwrite);
        IdaTturCell c;
        c.ttur = f;
        c.ida = ida;
        c.seed = seed;
        c.generator_updates = r.log.generator_updates;
        c.terminal_fd = r.log.evals.empty() ? std::nan("") : r.log.evals.back().fd_to_teacher;
        c.trailing_std = trailing_fd_std(r.log.evals, tc.generator_rounds(), cfg.ablation.trailing_fraction);
        c.dir = r.dir;
        c.curve = r.log.evals;
        c.track = std::move(r.log.track);
        summary.add_row({std::to_string(f), ida ? "1" : "0", std::to_string(seed), fmt(c.terminal_fd),
                         fmt(c.trailing_std), fmt(c.generator_updates), name.str()});
        for (const EvalPoint& e : c.curve) curves.add_row({name.str(), fmt(e.round), fmt(e.fd_to_teacher)});
        cells.push_back(std::move(c));
      }
    }
  }
  write_csv(out / "summary.csv", summary);
  write_csv(out / "fd_curves.csv", curves);
  return cells;
}

IsgAblation run_ablation_isg(const ExperimentConfig& cfg, const VelocityNet& teacher, const fs::path& out,
                             bool overwrite) {
  prepare_run_dir(out, overwrite);
  IsgAblation res;
  CsvTable table{{"isg", "seed", "fraction", "round", "fd_to_teacher"}, {}};
  const long long total = cfg.train.generator_rounds();
  std::vector<int> marks;
  for (double f : cfg.ablation.isg_fractions)
    marks.push_back(static_cast<int>(std::max<long long>(1, std::llround(f * static_cast<double>(total)))));

  for (std::uint64_t seed : cfg.seeds) {
    double first[2] = {0.0, 0.0};
    for (bool isg : {true, false}) {
      TrainConfig tc = cfg.train;
      tc.seed = seed;
      if (!isg) tc.lambda_isg = 0.0;
      tc.extra_eval_rounds = marks;
      const std::string name = std::string(isg ? "isg" : "noisg") + "_s" + std::to_string(seed);
      std::cerr << "[ablate-isg] " << name << "\n";
      const RunResult r = run_distill(cfg, tc, teacher, out / name, overwrite);
      for (std::size_t m = 0; m < marks.size(); ++m) {
        const auto it = std::find_if(r.log.evals.begin(), r.log.evals.end(),
                                     [&](const EvalPoint& e) { return e.round == marks[m]; });
        const double fd = it == r.log.evals.end() ? std::nan("") : it->fd_to_teacher;
        res.rows.push_back({isg, seed, cfg.ablation.isg_fractions[m], marks[m], fd});
        table.add_row({isg ? "1" : "0", std::to_string(seed), fmt(cfg.ablation.isg_fractions[m]),
                       std::to_string(marks[m]), fmt(fd)});
        if (m == 0) first[isg ? 0 : 1] = fd;
      }
    }
    ++res.seeds;
    if (first[0] <= first[1]) ++res.early_wins;
  }
  write_csv(out / "isg_dynamics.csv", table);
  return res;
}

// ---------------------------------------------------------------------------

TheoryReport verify_theory(std::uint64_t seed, const fs::path& dir, bool overwrite) {
  prepare_run_dir(dir, overwrite);
  TheoryReport rep;
  const Schedule s = Schedule::fmot();
  const TimeGrid grid = default_time_grid(s);
  Rng rng = derive_stream(seed, 100);

  for (int p = 0; p < 20; ++p) {
    const GaussianWorld w = random_world(rng);
    for (int ti = 1; ti <= 9; ++ti) {
      const double t = 0.1 * ti;
      const auto ds = gaussian_marginal_score(w.fake, t) - gaussian_marginal_score(w.generator, t);
      const auto dv = gaussian_target_field(w.fake, t) - gaussian_target_field(w.generator, t);
      const double a = score_velocity_factor(s, t);
      for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 10; ++j) {
          const Eigen::Vector2d x(-3.0 + 6.0 * i / 9.0, -3.0 + 6.0 * j / 9.0);
          rep.score_factor_max_residual = std::max(rep.score_factor_max_residual, (ds(x) - a * dv(x)).norm());
        }
    }
  }

  std::vector<GaussianWorld> calib;
  for (int i = 0; i < 50; ++i) calib.push_back(random_world(rng));
  rep.fisher_C = calibrate_fisher_constant(calib, grid);
  for (int i = 0; i < 100; ++i) {
    ++rep.epsilon_held_out;
    if (epsilon_bound_check(random_world(rng), s, grid, rep.fisher_C).holds) ++rep.epsilon_passed;
  }
  for (int i = 0; i < 20; ++i) {
    const GaussianWorld w = random_world(rng);
    const double eps = epsilon_bound_check(w, s, grid, rep.fisher_C).eps;
    const SandwichReport sw = sandwich_check(w, s, grid, eps, 100000, rng);
    ++rep.sandwich_worlds;
    rep.sandwich_agree += sw.agree;
    rep.sandwich_holds += sw.holds;
  }

  ScriptedDynamics d;
  d.defect << 0.05, -0.02, 0.03, 0.04;
  d.sigma << 0.8, 0.2, 0.2, 0.5;
  d.theta0 = Eigen::Vector2d(-1.0, 1.0);
  d.phi0 = Eigen::Vector2d(0.5, 0.5);
  d.C = rep.fisher_C;
  d.rounds = 300;
  const ScriptedTrace trace = run_scripted_trace(d, grid, rng);
  rep.scripted = check_recursions(trace.records, d.lambda, trace.exact);

  ScriptedDynamics decay = d;
  decay.step_decay = 0.97;
  decay.rounds = 800;
  rep.limit = limit_check(run_scripted_trace(decay, grid, rng).records);

  CsvTable slack{{"k", "slack_e", "slack_delta", "slack_dbar"}, {}};
  for (std::size_t k = 0; k < trace.records.size(); ++k)
    slack.add_row({std::to_string(k), format_double(rep.scripted.e.slack[k]),
                   format_double(rep.scripted.delta.slack[k]), format_double(rep.scripted.dbar.slack[k])});
  write_csv(dir / "slack.csv", slack);

  const bool score_ok = rep.score_factor_max_residual < 1e-8;
  const bool eps_ok = rep.epsilon_passed == rep.epsilon_held_out;
  const bool sw_ok = rep.sandwich_agree == rep.sandwich_worlds && rep.sandwich_holds == rep.sandwich_worlds;
  const bool rec_ok = rep.scripted.e.pass_fraction() == 1.0 && rep.scripted.delta.pass_fraction() == 1.0 &&
                      rep.scripted.dbar.pass_fraction() == 1.0;
  rep.passed = score_ok && eps_ok && sw_ok && rec_ok && rep.limit.holds;

  std::ostringstream os;
  auto line = [&](const char* name, bool ok, const std::string& detail) {
    os << (ok ? "PASS " : "FAIL ") << name << ": " << detail << "\n";
  };
  line("score-velocity factor", score_ok, "max residual " + format_double(rep.score_factor_max_residual));
  line("epsilon bound", eps_ok,
       std::to_string(rep.epsilon_passed) + "/" + std::to_string(rep.epsilon_held_out) + " held out, C=" +
           format_double(rep.fisher_C));
  line("sandwich", sw_ok,
       std::to_string(rep.sandwich_agree) + " agree, " + std::to_string(rep.sandwich_holds) + " hold of " +
           std::to_string(rep.sandwich_worlds));
  line("recursions (exact constants)", rec_ok,
       "pass fractions " + format_double(rep.scripted.e.pass_fraction()) + " " +
           format_double(rep.scripted.delta.pass_fraction()) + " " + format_double(rep.scripted.dbar.pass_fraction()));
  line("vanishing steps", rep.limit.holds,
       "limsup e " + format_double(rep.limit.limsup_e) + ", limsup dbar " + format_double(rep.limit.limsup_dbar) +
           ", max betabar " + format_double(rep.limit.max_betabar));
  rep.summary = os.str();
  write_text(dir / "summary.txt", rep.summary);
  emit_charts(dir);
  return rep;
}

std::vector<XiPoint> profile_xi(const VelocityNet& net, const ExperimentConfig& cfg, std::uint64_t seed,
                                const fs::path& dir, bool overwrite) {
  prepare_run_dir(dir, overwrite);
  const Schedule s = cfg.train.schedule;
  std::vector<double> ts;
  for (int i = 0; i <= 40; ++i) ts.push_back(s.t_min + (1.0 - s.t_min) * i / 40.0);
  Rng rng = derive_stream(seed, kStreamEval);
  const auto curve = xi_profile(net, s, build_dataset(cfg.dataset), ts, 4096, rng);
  CsvTable t{{"t", "xi", "raw", "raw_stderr"}, {}};
  for (const auto& p : curve) t.add_row({fmt(p.t), fmt(p.xi), fmt(p.raw), fmt(p.raw_stderr)});
  write_csv(dir / "xi.csv", t);
  emit_charts(dir);
  return curve;
}

CsvTable sample_table(const VelocityNet& generator, const CoarseGrid& anchors, const DatasetSpec& data, Index n,
                      std::uint64_t seed) {
  Rng rng = derive_stream(seed, kStreamEval);
  const Batch b = sample_batch(data, n, rng);
  const Matrix z = standard_normal(rng, n, 2);
  const Matrix x = anchor_sample(generator.field(), anchors, z, b.cond);
  CsvTable t{{"x", "y", "cond"}, {}};
  for (Index i = 0; i < n; ++i)
    t.add_row({fmt(x(i, 0)), fmt(x(i, 1)), std::to_string(b.cond[static_cast<std::size_t>(i)])});
  return t;
}

MetricReport evaluate_generator(const VelocityNet& generator, const VelocityNet& teacher, const DatasetSpec& data,
                                const CoarseGrid& anchors, std::uint64_t seed, Index n) {
  Rng rng = derive_stream(seed, kStreamEval);
  const Batch b = sample_batch(data, n, rng);
  const Matrix z = standard_normal(rng, n, 2);
  const Matrix gen = anchor_sample(generator.field(), anchors, z, b.cond);
  const Batch rb = sample_batch(data, n, rng);
  const Matrix ref = euler_sample(teacher.field(), uniform_grid(32), standard_normal(rng, n, 2), rb.cond);
  MetricReport m;
  m.fd = frechet_gaussian_distance(gen, ref);
  const Index k = std::min<Index>(n, 512);
  m.mmd = mmd_rbf(gen.topRows(k), ref.topRows(k));
  if (data.family == DataFamily::kGaussianMixture) m.kl_est = kl_estimate(gen, data);
  const std::vector<int> steps{4, 8, 16};
  const std::vector<std::uint64_t> seeds{seed};
  m.step_drift = step_consistency(generator.field(), anchors, steps, 1024, seeds, data.num_conditions());
  m.diversity = pairwise_diversity(gen.topRows(k), std::span<const int>(b.cond).first(static_cast<std::size_t>(k)));
  return m;
}

}  // namespace dmdlab
