// Copyright (C) 2026 The dmdlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmdlab/config.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "dmdlab/errors.hpp"

namespace dmdlab {

namespace fs = std::filesystem;

DatasetSpec build_dataset(const DatasetConfig& c) {
  const ConditionMode mode = c.conditional ? ConditionMode::kComponentLabel : ConditionMode::kUnconditional;
  DatasetSpec spec;
  switch (parse_family(c.family)) {
    case DataFamily::kGaussianMixture:
      spec = ring_mixture(c.components, c.radius, c.std, mode);
      break;
    case DataFamily::kTwoMoons:
      spec = two_moons(c.moons_noise, mode);
      break;
    case DataFamily::kCheckerboard:
      spec = checkerboard(mode);
      break;
  }
  return c.standardize ? standardize(spec) : spec;
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("seeds: list must be nonempty");
  if (schedule != "fmot") throw ConfigError("schedule: distillation supports only \"fmot\"");
  try {
    build_dataset(dataset).validate();
    teacher.validate();
    train.validate();
  } catch (const ContractViolation& e) {
    throw ConfigError(e.what());
  }
  if (ablation.ttur_values.empty()) throw ConfigError("ablation.ttur_values: list must be nonempty");
  for (int f : ablation.ttur_values)
    if (f < 1) throw ConfigError("ablation.ttur_values: entries must be at least 1");
  if (!(ablation.ida_lambda > 0.0 && ablation.ida_lambda <= 1.0))
    throw ConfigError("ablation.ida_lambda: must lie in (0, 1]");
  for (double f : ablation.isg_fractions)
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("ablation.isg_fractions: entries must lie in (0, 1]");
  if (!(ablation.trailing_fraction > 0.0 && ablation.trailing_fraction <= 1.0))
    throw ConfigError("ablation.trailing_fraction: must lie in (0, 1]");
}

namespace {

std::string normalizer_name(DmdNormalizer n) { return n == DmdNormalizer::kVelocityGap ? "velocity_gap" : "x0_gap"; }

DmdNormalizer parse_normalizer(const std::string& s) {
  if (s == "velocity_gap") return DmdNormalizer::kVelocityGap;
  if (s == "x0_gap") return DmdNormalizer::kX0Gap;
  throw ConfigError("train.normalizer: unknown value \"" + s + "\"");
}

Json net_json(const VelocityNetConfig& n) {
  return {{"width", n.width}, {"depth", n.depth}, {"time_dim", n.time_dim}, {"cond_dim", n.cond_dim}};
}

// Reads known keys from an object and rejects the rest.
class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }
  void done() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(where(it.key()) + ": unknown key");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(where(key) + ": wrong type");
    }
  }
  const Json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

Json to_json(const ExperimentConfig& c) {
  Json j;
  j["dataset"] = {{"family", c.dataset.family},       {"components", c.dataset.components},
                  {"radius", c.dataset.radius},       {"std", c.dataset.std},
                  {"moons_noise", c.dataset.moons_noise}, {"conditional", c.dataset.conditional},
                  {"standardize", c.dataset.standardize}};
  j["schedule"] = c.schedule;
  j["net"] = net_json(c.net);
  j["teacher"] = {{"iters", c.teacher.iters}, {"batch", c.teacher.batch}, {"lr", c.teacher.lr},
                  {"lr_final", c.teacher.lr_final}};
  const TrainConfig& t = c.train;
  const auto& a = t.anchors.anchors();
  j["train"] = {{"lambda_ida", t.lambda_ida},
                {"lambda_isg", t.lambda_isg},
                {"lambda_g", t.lambda_g},
                {"ttur_f", t.ttur_f},
                {"lr_g", t.lr_g},
                {"lr_fake", t.lr_fake},
                {"lr_d", t.lr_d},
                {"iters", t.iters},
                {"batch", t.batch},
                {"anchors", std::vector<double>(a.begin(), a.end())},
                {"logitnormal_mu", t.logitnormal_mu},
                {"logitnormal_sigma", t.logitnormal_sigma},
                {"backward_sim_prob", t.backward_sim_prob},
                {"t_min", t.schedule.t_min},
                {"ida_enabled", t.ida_enabled},
                {"isg_final_hop", t.isg_final_hop},
                {"dmd_t_max", t.dmd_t_max},
                {"normalizer", normalizer_name(t.normalizer)},
                {"eval_every_rounds", t.eval_every_rounds},
                {"eval_samples", t.eval_samples},
                {"eval_reference_samples", t.eval_reference_samples},
                {"teacher_eval_steps", t.teacher_eval_steps},
                {"track", t.track},
                {"track_samples", t.track_samples},
                {"track_C", t.track_C},
                {"constants_every_rounds", t.constants_every_rounds},
                {"constants_probes", t.constants_probes},
                {"constants_probe_scale", t.constants_probe_scale},
                {"disc", {{"backbone_width", t.disc.backbone_width},
                          {"head_width", t.disc.head_width},
                          {"feature_dim", t.disc.feature_dim}}}};
  j["ablation"] = {{"ttur_values", c.ablation.ttur_values},
                   {"ida_lambda", c.ablation.ida_lambda},
                   {"isg_fractions", c.ablation.isg_fractions},
                   {"trailing_fraction", c.ablation.trailing_fraction}};
  j["teacher_checkpoint"] = c.teacher_checkpoint;
  j["seeds"] = c.seeds;
  return j;
}

ExperimentConfig config_from_json(const Json& j) {
  ExperimentConfig c;
  {
    Reader r(j, "");
    if (const Json* d = r.child("dataset")) {
      Reader rd(*d, "dataset");
      rd.get("family", c.dataset.family);
      rd.get("components", c.dataset.components);
      rd.get("radius", c.dataset.radius);
      rd.get("std", c.dataset.std);
      rd.get("moons_noise", c.dataset.moons_noise);
      rd.get("conditional", c.dataset.conditional);
      rd.get("standardize", c.dataset.standardize);
      rd.done();
    }
    r.get("schedule", c.schedule);
    if (const Json* n = r.child("net")) {
      Reader rn(*n, "net");
      rn.get("width", c.net.width);
      rn.get("depth", c.net.depth);
      rn.get("time_dim", c.net.time_dim);
      rn.get("cond_dim", c.net.cond_dim);
      rn.done();
    }
    if (const Json* tj = r.child("teacher")) {
      Reader rt(*tj, "teacher");
      rt.get("iters", c.teacher.iters);
      rt.get("batch", c.teacher.batch);
      rt.get("lr", c.teacher.lr);
      rt.get("lr_final", c.teacher.lr_final);
      rt.done();
    }
    if (const Json* tj = r.child("train")) {
      TrainConfig& t = c.train;
      Reader rt(*tj, "train");
      rt.get("lambda_ida", t.lambda_ida);
      rt.get("lambda_isg", t.lambda_isg);
      rt.get("lambda_g", t.lambda_g);
      rt.get("ttur_f", t.ttur_f);
      rt.get("lr_g", t.lr_g);
      rt.get("lr_fake", t.lr_fake);
      rt.get("lr_d", t.lr_d);
      rt.get("iters", t.iters);
      rt.get("batch", t.batch);
      std::vector<double> anchors;
      rt.get("anchors", anchors);
      if (!anchors.empty()) {
        if (anchors.size() != 4) throw ConfigError("train.anchors: exactly four anchors required");
        try {
          t.anchors = CoarseGrid({anchors[0], anchors[1], anchors[2], anchors[3]});
        } catch (const ContractViolation& e) {
          throw ConfigError(std::string("train.anchors: ") + e.what());
        }
      }
      rt.get("logitnormal_mu", t.logitnormal_mu);
      rt.get("logitnormal_sigma", t.logitnormal_sigma);
      rt.get("backward_sim_prob", t.backward_sim_prob);
      rt.get("t_min", t.schedule.t_min);
      rt.get("ida_enabled", t.ida_enabled);
      rt.get("isg_final_hop", t.isg_final_hop);
      rt.get("dmd_t_max", t.dmd_t_max);
      std::string norm = normalizer_name(t.normalizer);
      rt.get("normalizer", norm);
      t.normalizer = parse_normalizer(norm);
      rt.get("eval_every_rounds", t.eval_every_rounds);
      rt.get("eval_samples", t.eval_samples);
      rt.get("eval_reference_samples", t.eval_reference_samples);
      rt.get("teacher_eval_steps", t.teacher_eval_steps);
      rt.get("track", t.track);
      rt.get("track_samples", t.track_samples);
      rt.get("track_C", t.track_C);
      rt.get("constants_every_rounds", t.constants_every_rounds);
      rt.get("constants_probes", t.constants_probes);
      rt.get("constants_probe_scale", t.constants_probe_scale);
      if (const Json* dj = rt.child("disc")) {
        Reader rdisc(*dj, "train.disc");
        rdisc.get("backbone_width", t.disc.backbone_width);
        rdisc.get("head_width", t.disc.head_width);
        rdisc.get("feature_dim", t.disc.feature_dim);
        rdisc.done();
      }
      rt.done();
    }
    if (const Json* aj = r.child("ablation")) {
      Reader ra(*aj, "ablation");
      ra.get("ttur_values", c.ablation.ttur_values);
      ra.get("ida_lambda", c.ablation.ida_lambda);
      ra.get("isg_fractions", c.ablation.isg_fractions);
      ra.get("trailing_fraction", c.ablation.trailing_fraction);
      ra.done();
    }
    r.get("teacher_checkpoint", c.teacher_checkpoint);
    r.get("seeds", c.seeds);
    r.done();
  }
  c.teacher.net = c.net;
  c.teacher.schedule = c.train.schedule;
  c.validate();
  return c;
}

ExperimentConfig load_config(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot open config file " + p.string());
  Json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error in " + p.string() + ": " + e.what());
  }
  return config_from_json(j);
}

std::string canonical_dump(const Json& j) { return j.dump(2) + "\n"; }

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256: digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return os.str();
}

std::string config_hash(const Json& j) { return sha256_hex(canonical_dump(j)); }

Json RunManifest::to_json() const {
  Json out = Json::array();
  for (const auto& [label, path] : outputs) out.push_back({{"label", label}, {"path", path}});
  return {{"config_hash", config_hash},
          {"code_version", code_version},
          {"started", started},
          {"finished", finished},
          {"outputs", out}};
}

std::string code_version() { return "dmdlab 0.1.0"; }

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void prepare_run_dir(const fs::path& dir, bool overwrite) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw ConfigError(dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir)) {
      if (!overwrite) throw ConfigError("run directory " + dir.string() + " already exists; pass --overwrite");
      fs::remove_all(dir);
    }
  }
  fs::create_directories(dir);
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace dmdlab
