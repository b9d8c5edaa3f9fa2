// Copyright (C) 2026 The dmdlab Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end. Exit codes: 0 ok, 2 config error, 3 numeric
// failure, 4 failed acceptance check.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dmdlab/charts.hpp"
#include "dmdlab/checkpoint.hpp"
#include "dmdlab/config.hpp"
#include "dmdlab/errors.hpp"
#include "dmdlab/harness.hpp"

namespace fs = std::filesystem;
using namespace dmdlab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitCheck = 4;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "runs/out";
  bool overwrite = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "experiment config (JSON)");
  app->add_option("--seed", c.seed, "seed; overrides the config seed list");
  app->add_option("--out", c.out, "output directory");
  app->add_flag("--overwrite", c.overwrite, "replace an existing output directory");
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? config_from_json(Json::object()) : load_config(c.config);
  if (c.seed) cfg.seeds = {*c.seed};
  return cfg;
}

VelocityNet need_teacher(const ExperimentConfig& cfg, const std::string& override_path, const fs::path& out,
                         bool overwrite) {
  if (!override_path.empty()) return velocity_net_from(load_checkpoint(override_path));
  return obtain_teacher(cfg, out / "teacher", overwrite);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dmdlab: few-step distillation of 2D flow-matching models"};
  app.require_subcommand(1);

  Common common;
  std::string teacher_path, generator_path;
  long long n_samples = 2048;

  auto* teach = app.add_subcommand("train-teacher", "train the flow-matching teacher");
  add_common(teach, common);

  auto* distill = app.add_subcommand("distill", "distill a 4-anchor generator");
  add_common(distill, common);
  distill->add_option("--teacher", teacher_path, "teacher checkpoint (else config or fresh training)");

  auto* sample = app.add_subcommand("sample", "draw generator samples to CSV");
  add_common(sample, common);
  sample->add_option("--generator", generator_path, "generator checkpoint")->required();
  sample->add_option("-n,--samples", n_samples, "number of samples");

  auto* eval = app.add_subcommand("eval", "metrics of a generator against its teacher");
  add_common(eval, common);
  eval->add_option("--generator", generator_path, "generator checkpoint")->required();
  eval->add_option("--teacher", teacher_path, "teacher checkpoint")->required();

  auto* xi = app.add_subcommand("profile-xi", "one-step reconstruction profile of a model");
  add_common(xi, common);
  xi->add_option("--model", teacher_path, "velocity model checkpoint")->required();

  auto* theory = app.add_subcommand("verify-theory", "analytic-family recursion and bound checks");
  add_common(theory, common);

  auto* ida = app.add_subcommand("ablate-ida-ttur", "IDA on/off across TTUR ratios");
  add_common(ida, common);
  ida->add_option("--teacher", teacher_path, "teacher checkpoint");

  auto* isg = app.add_subcommand("ablate-isg", "ISG on/off training dynamics");
  add_common(isg, common);
  isg->add_option("--teacher", teacher_path, "teacher checkpoint");

  std::string chart_dir;
  auto* charts = app.add_subcommand("charts", "render SVG charts for the CSVs in a run directory");
  charts->add_option("run_dir", chart_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*charts) {
      for (const auto& p : emit_charts(chart_dir)) std::cout << p.string() << "\n";
      return kExitOk;
    }
    const ExperimentConfig cfg = resolve(common);
    const fs::path out = common.out;
    const std::uint64_t seed = cfg.seeds.front();

    if (*teach) {
      const TeacherResult r = train_teacher(cfg, seed, out, common.overwrite);
      std::cout << "teacher checkpoint " << r.checkpoint.string() << "\nfd_to_data " << format_double(r.fd_to_data)
                << "\n";
      return kExitOk;
    }
    if (*distill) {
      prepare_run_dir(out, common.overwrite);
      const VelocityNet teacher = need_teacher(cfg, teacher_path, out, common.overwrite);
      for (std::uint64_t s : cfg.seeds) {
        TrainConfig tc = cfg.train;
        tc.seed = s;
        const RunResult r = run_distill(cfg, tc, teacher, out / ("seed" + std::to_string(s)), common.overwrite);
        const double fd = r.log.evals.empty() ? 0.0 : r.log.evals.back().fd_to_teacher;
        std::cout << "seed " << s << " terminal fd_to_teacher " << format_double(fd) << "\n";
      }
      emit_charts(out);
      return kExitOk;
    }
    if (*sample) {
      const VelocityNet g = velocity_net_from(load_checkpoint(generator_path));
      prepare_run_dir(out, common.overwrite);
      write_csv(out / "samples.csv", sample_table(g, cfg.train.anchors, build_dataset(cfg.dataset), n_samples, seed));
      return kExitOk;
    }
    if (*eval) {
      const VelocityNet g = velocity_net_from(load_checkpoint(generator_path));
      const VelocityNet t = velocity_net_from(load_checkpoint(teacher_path));
      const MetricReport m = evaluate_generator(g, t, build_dataset(cfg.dataset), cfg.train.anchors, seed);
      prepare_run_dir(out, common.overwrite);
      CsvTable table{{"metric", "value"}, {}};
      table.add_row({"fd_to_teacher", format_double(m.fd)});
      table.add_row({"mmd", format_double(m.mmd)});
      if (m.kl_est) table.add_row({"kl_estimate", format_double(*m.kl_est)});
      for (const auto& [k, v] : m.step_drift)
        table.add_row({"drift_" + std::to_string(k.first) + "_" + std::to_string(k.second), format_double(v)});
      table.add_row({"diversity", format_double(m.diversity)});
      write_csv(out / "metrics.csv", table);
      std::cout << to_csv(table);
      return kExitOk;
    }
    if (*xi) {
      const VelocityNet net = velocity_net_from(load_checkpoint(teacher_path));
      const auto curve = profile_xi(net, cfg, seed, out, common.overwrite);
      std::cout << "xi(t_min) " << format_double(curve.front().xi) << "\n";
      return kExitOk;
    }
    if (*theory) {
      const TheoryReport r = verify_theory(seed, out, common.overwrite);
      std::cout << r.summary;
      return r.passed ? kExitOk : kExitCheck;
    }
    if (*ida) {
      prepare_run_dir(out, common.overwrite);
      const VelocityNet teacher = need_teacher(cfg, teacher_path, out, common.overwrite);
      const auto cells = run_ablation_ida_ttur(cfg, teacher, out / "grid", common.overwrite);
      std::cout << read_text(out / "grid" / "summary.csv");
      emit_charts(out);
      return kExitOk;
    }
    if (*isg) {
      prepare_run_dir(out, common.overwrite);
      const VelocityNet teacher = need_teacher(cfg, teacher_path, out, common.overwrite);
      const IsgAblation r = run_ablation_isg(cfg, teacher, out / "isg", common.overwrite);
      std::cout << "early checkpoint wins for ISG: " << r.early_wins << "/" << r.seeds << "\n";
      emit_charts(out);
      return r.majority() ? kExitOk : kExitCheck;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericFailure& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ContractViolation& e) {
    std::cerr << "contract violation: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}
