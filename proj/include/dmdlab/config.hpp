// Copyright (C) 2026 The dmdlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmdlab/data.hpp"
#include "dmdlab/distill.hpp"
#include "dmdlab/nets.hpp"

namespace dmdlab {

using Json = nlohmann::json;

struct DatasetConfig {
  std::string family = "gaussian_mixture";
  int components = 8;
  double radius = 4.0;
  double std = 0.3;
  double moons_noise = 0.1;
  bool conditional = true;
  bool standardize = true;
};

DatasetSpec build_dataset(const DatasetConfig& c);

struct AblationConfig {
  std::vector<int> ttur_values{5, 10, 20};
  double ida_lambda = 0.95;
  std::vector<double> isg_fractions{0.10, 0.25, 0.50, 1.00};
  double trailing_fraction = 0.25;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  std::string schedule = "fmot";
  VelocityNetConfig net;
  TeacherConfig teacher;
  TrainConfig train;
  AblationConfig ablation;
  std::string teacher_checkpoint;  // empty: train one in the run directory
  std::vector<std::uint64_t> seeds{0, 1, 2};

  void validate() const;
};

Json to_json(const ExperimentConfig& c);
/// Missing keys keep their defaults; unknown keys and bad types raise ConfigError.
ExperimentConfig config_from_json(const Json& j);
ExperimentConfig load_config(const std::filesystem::path& p);

/// Sorted keys, two-space indent, LF line endings, trailing newline.
std::string canonical_dump(const Json& j);
/// Lower-case hex SHA-256 of canonical_dump.
std::string config_hash(const Json& j);
std::string sha256_hex(const std::string& bytes);

struct RunManifest {
  std::string config_hash;
  std::string code_version;
  std::string started;
  std::string finished;
  std::vector<std::pair<std::string, std::string>> outputs;  // label, path

  Json to_json() const;
};

std::string code_version();
std::string utc_timestamp();

/// Creates dir. An existing non-empty dir is refused unless overwrite is set,
/// in which case its contents are removed first.
void prepare_run_dir(const std::filesystem::path& dir, bool overwrite);

void write_text(const std::filesystem::path& p, const std::string& text);
std::string read_text(const std::filesystem::path& p);

}  // namespace dmdlab
