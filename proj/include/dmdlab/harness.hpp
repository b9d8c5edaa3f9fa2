// Copyright (C) 2026 The dmdlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dmdlab/config.hpp"
#include "dmdlab/csv.hpp"
#include "dmdlab/distill.hpp"
#include "dmdlab/metrics.hpp"

namespace dmdlab {

struct TeacherResult {
  VelocityNet net;
  double fd_to_data = 0.0;
  std::filesystem::path checkpoint;
};

/// Trains, saves teacher.ckpt with its loss log, and reports FD between
/// 32-step Euler samples and data.
TeacherResult train_teacher(const ExperimentConfig& cfg, std::uint64_t seed, const std::filesystem::path& dir,
                            bool overwrite);

/// Loads cfg.teacher_checkpoint when set, otherwise trains into dir.
VelocityNet obtain_teacher(const ExperimentConfig& cfg, const std::filesystem::path& dir, bool overwrite);

/// Teacher FD against fresh data, 32-step Euler, fixed evaluation seed.
double teacher_fd_to_data(const VelocityNet& teacher, const DatasetSpec& data, std::uint64_t seed, Index n = 4096);

CsvTable train_log_table(const TrainLog& log);
CsvTable track_table(const TrainLog& log);
CsvTable evals_table(const TrainLog& log);

struct RunResult {
  TrainLog log;
  std::filesystem::path dir;
};

/// One distillation run with cfg.train replaced by tc. Writes the config
/// snapshot, manifest, CSV logs and checkpoints into dir.
RunResult run_distill(const ExperimentConfig& cfg, const TrainConfig& tc, const VelocityNet& teacher,
                      const std::filesystem::path& dir, bool overwrite);

/// Sample standard deviation of FD-to-teacher over evaluations in the last
/// fraction of generator updates. 0 with fewer than two points.
double trailing_fd_std(const std::vector<EvalPoint>& evals, long long total_rounds, double fraction);

struct IdaTturCell {
  int ttur = 0;
  bool ida = false;
  std::uint64_t seed = 0;
  double terminal_fd = 0.0;
  double trailing_std = 0.0;
  long long generator_updates = 0;
  std::filesystem::path dir;
  std::vector<EvalPoint> curve;
  std::vector<TrackRecord> track;
};

std::vector<IdaTturCell> run_ablation_ida_ttur(const ExperimentConfig& cfg, const VelocityNet& teacher,
                                               const std::filesystem::path& out, bool overwrite);

struct IsgRow {
  bool isg = false;
  std::uint64_t seed = 0;
  double fraction = 0.0;
  long long round = 0;
  double fd = 0.0;
};

struct IsgAblation {
  std::vector<IsgRow> rows;
  int early_wins = 0;  // seeds with FD(ISG) <= FD(no ISG) at the first checkpoint
  int seeds = 0;
  bool majority() const { return 2 * early_wins > seeds; }
};

IsgAblation run_ablation_isg(const ExperimentConfig& cfg, const VelocityNet& teacher, const std::filesystem::path& out,
                             bool overwrite);

struct TheoryReport {
  double score_factor_max_residual = 0.0;
  double fisher_C = 0.0;
  int epsilon_held_out = 0;
  int epsilon_passed = 0;
  int sandwich_worlds = 0;
  int sandwich_agree = 0;
  int sandwich_holds = 0;
  RecursionReport scripted;
  LimitReport limit;
  bool passed = false;
  std::string summary;
};

/// Analytic-family checks; writes slack.csv and summary.txt into dir.
TheoryReport verify_theory(std::uint64_t seed, const std::filesystem::path& dir, bool overwrite);

/// Writes xi.csv and xi_curve.svg.
std::vector<XiPoint> profile_xi(const VelocityNet& net, const ExperimentConfig& cfg, std::uint64_t seed,
                                const std::filesystem::path& dir, bool overwrite);

/// Anchor-sampler draws with labels.
CsvTable sample_table(const VelocityNet& generator, const CoarseGrid& anchors, const DatasetSpec& data, Index n,
                      std::uint64_t seed);

/// FD, MMD, KL estimate, step drift and diversity of a generator.
MetricReport evaluate_generator(const VelocityNet& generator, const VelocityNet& teacher, const DatasetSpec& data,
                                const CoarseGrid& anchors, std::uint64_t seed, Index n = 2048);

}  // namespace dmdlab
