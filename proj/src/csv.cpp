// Copyright (C) 2026 The dmdlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmdlab/csv.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "dmdlab/config.hpp"
#include "dmdlab/errors.hpp"

namespace dmdlab {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  if (s == "nan") return std::nan("");
  if (s == "inf") return HUGE_VAL;
  if (s == "-inf") return -HUGE_VAL;
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return i;
  throw SchemaError(name);
}

bool CsvTable::has_column(const std::string& name) const {
  for (const auto& c : columns)
    if (c == name) return true;
  return false;
}

void CsvTable::add_row(std::vector<std::string> r) {
  DMDLAB_REQUIRE(r.size() == columns.size(), "CsvTable: row width does not match the header");
  rows.push_back(std::move(r));
}

namespace {

void join(std::string& out, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += cells[i];
  }
  out += '\n';
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  cells.push_back(cur);
  return cells;
}

}  // namespace

std::string to_csv(const CsvTable& t) {
  std::string out = "# schema=" + std::to_string(kCsvSchema) + "\n";
  join(out, t.columns);
  for (const auto& r : t.rows) join(out, r);
  return out;
}

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      t.columns = split(line);
      header = true;
      continue;
    }
    auto cells = split(line);
    if (cells.size() != t.columns.size()) throw std::runtime_error("csv: row width does not match the header");
    t.rows.push_back(std::move(cells));
  }
  return t;
}

void write_csv(const std::filesystem::path& p, const CsvTable& t) { write_text(p, to_csv(t)); }

CsvTable read_csv(const std::filesystem::path& p) { return parse_csv(read_text(p)); }

}  // namespace dmdlab
