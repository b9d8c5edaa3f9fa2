// Copyright (C) 2026 The dmdlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Checkpoint byte layout (all header lines LF-terminated ASCII):
//
//   dmdlab-checkpoint 1
//   kind <kind>
//   meta <key> <integer>            (zero or more, in insertion order)
//   section <name> <slots> <total>  (one per parameter block)
//   slot <name> <rows> <cols> <offset>
//   ...
//   payload float64-le <total over sections>
//   <raw little-endian doubles, sections in header order>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "dmdlab/nets.hpp"
#include "dmdlab/params.hpp"

namespace dmdlab {

struct Checkpoint {
  std::string kind;
  std::vector<std::pair<std::string, std::int64_t>> meta;
  std::vector<std::pair<std::string, ParamVector>> sections;

  std::int64_t meta_value(const std::string& key) const;
  const ParamVector& section(const std::string& name) const;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ck);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint to_checkpoint(const VelocityNet& net);
VelocityNet velocity_net_from(const Checkpoint& ck);
Checkpoint to_checkpoint(const Discriminator& d);
Discriminator discriminator_from(const Checkpoint& ck);

}  // namespace dmdlab
