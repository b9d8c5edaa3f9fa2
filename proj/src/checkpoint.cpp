// Copyright (C) 2026 The dmdlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmdlab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <memory>
#include <ostream>
#include <sstream>

#include "dmdlab/errors.hpp"

namespace dmdlab {

namespace {

constexpr const char* kMagic = "dmdlab-checkpoint 1";

void put_double(std::ostream& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xffu);
  out.write(buf, 8);
}

double get_double(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (!in) throw ConfigError("checkpoint payload truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

std::string next_line(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("checkpoint header truncated");
  return line;
}

}  // namespace

std::int64_t Checkpoint::meta_value(const std::string& key) const {
  for (const auto& [k, v] : meta) {
    if (k == key) return v;
  }
  throw ConfigError("checkpoint is missing meta key '" + key + "'");
}

const ParamVector& Checkpoint::section(const std::string& name) const {
  for (const auto& [k, v] : sections) {
    if (k == name) return v;
  }
  throw ConfigError("checkpoint is missing section '" + name + "'");
}

void write_checkpoint(std::ostream& out, const Checkpoint& ck) {
  out << kMagic << '\n' << "kind " << ck.kind << '\n';
  for (const auto& [k, v] : ck.meta) out << "meta " << k << ' ' << v << '\n';
  Index total = 0;
  for (const auto& [name, p] : ck.sections) {
    out << "section " << name << ' ' << p.layout().count() << ' ' << p.size() << '\n';
    for (const auto& s : p.layout().slots()) {
      out << "slot " << s.name << ' ' << s.rows << ' ' << s.cols << ' ' << s.offset << '\n';
    }
    total += p.size();
  }
  out << "payload float64-le " << total << '\n';
  for (const auto& [name, p] : ck.sections) {
    for (Index i = 0; i < p.size(); ++i) put_double(out, p.flat()(i));
  }
}

Checkpoint read_checkpoint(std::istream& in) {
  if (next_line(in) != kMagic) throw ConfigError("not a dmdlab checkpoint");
  Checkpoint ck;
  std::vector<std::pair<std::string, std::shared_ptr<ParamLayout>>> layouts;
  Index declared = -1;
  while (declared < 0) {
    std::istringstream ls(next_line(in));
    std::string tag;
    ls >> tag;
    if (tag == "kind") {
      ls >> ck.kind;
    } else if (tag == "meta") {
      std::string k;
      std::int64_t v = 0;
      ls >> k >> v;
      ck.meta.emplace_back(k, v);
    } else if (tag == "section") {
      std::string name;
      ls >> name;
      layouts.emplace_back(name, std::make_shared<ParamLayout>());
    } else if (tag == "slot") {
      if (layouts.empty()) throw ConfigError("checkpoint slot before section");
      std::string name;
      Index rows = 0, cols = 0, offset = 0;
      ls >> name >> rows >> cols >> offset;
      auto& l = *layouts.back().second;
      if (offset != l.size()) throw ConfigError("checkpoint slot offsets are not contiguous");
      l.add(name, rows, cols);
    } else if (tag == "payload") {
      std::string enc;
      ls >> enc >> declared;
      if (enc != "float64-le") throw ConfigError("unsupported checkpoint payload encoding " + enc);
    } else {
      throw ConfigError("unknown checkpoint header line '" + tag + "'");
    }
    if (!ls && tag != "payload") throw ConfigError("malformed checkpoint header line");
  }
  Index total = 0;
  for (auto& [name, layout] : layouts) {
    Vector flat(layout->size());
    for (Index i = 0; i < flat.size(); ++i) flat(i) = get_double(in);
    total += flat.size();
    ck.sections.emplace_back(name, ParamVector(layout, std::move(flat)));
  }
  if (total != declared) throw ConfigError("checkpoint payload size does not match header");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint " + path.string());
  write_checkpoint(out, ck);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

Checkpoint to_checkpoint(const VelocityNet& net) {
  const auto& c = net.config();
  Checkpoint ck;
  ck.kind = "velocity_net";
  ck.meta = {{"data_dim", c.data_dim}, {"width", c.width},       {"depth", c.depth},
             {"time_dim", c.time_dim}, {"cond_dim", c.cond_dim}, {"num_conditions", c.num_conditions}};
  ck.sections.emplace_back("params", net.params());
  return ck;
}

VelocityNet velocity_net_from(const Checkpoint& ck) {
  if (ck.kind != "velocity_net") throw ConfigError("checkpoint kind is '" + ck.kind + "', expected velocity_net");
  VelocityNetConfig c;
  c.data_dim = static_cast<int>(ck.meta_value("data_dim"));
  c.width = static_cast<int>(ck.meta_value("width"));
  c.depth = static_cast<int>(ck.meta_value("depth"));
  c.time_dim = static_cast<int>(ck.meta_value("time_dim"));
  c.cond_dim = static_cast<int>(ck.meta_value("cond_dim"));
  c.num_conditions = static_cast<int>(ck.meta_value("num_conditions"));
  const auto& p = ck.section("params");
  if (!(p.layout() == *VelocityNet::make_layout(c))) throw ConfigError("checkpoint layout does not match its config");
  return VelocityNet(c, ParamVector(VelocityNet::make_layout(c), p.flat()));
}

Checkpoint to_checkpoint(const Discriminator& d) {
  const auto& c = d.config();
  Checkpoint ck;
  ck.kind = "discriminator";
  ck.meta = {{"data_dim", c.data_dim},
             {"backbone_width", c.backbone_width},
             {"head_width", c.head_width},
             {"feature_dim", c.feature_dim},
             {"num_conditions", c.num_conditions}};
  ck.sections.emplace_back("backbone", d.backbone());
  ck.sections.emplace_back("head", d.head());
  return ck;
}

Discriminator discriminator_from(const Checkpoint& ck) {
  if (ck.kind != "discriminator") throw ConfigError("checkpoint kind is '" + ck.kind + "', expected discriminator");
  DiscriminatorConfig c;
  c.data_dim = static_cast<int>(ck.meta_value("data_dim"));
  c.backbone_width = static_cast<int>(ck.meta_value("backbone_width"));
  c.head_width = static_cast<int>(ck.meta_value("head_width"));
  c.feature_dim = static_cast<int>(ck.meta_value("feature_dim"));
  c.num_conditions = static_cast<int>(ck.meta_value("num_conditions"));
  return Discriminator(c, ParamVector(Discriminator::backbone_layout(c), ck.section("backbone").flat()),
                       ParamVector(Discriminator::head_layout(c), ck.section("head").flat()));
}

}  // namespace dmdlab
