// Copyright (C) 2026 The dmdlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dmdlab {

inline constexpr int kCsvSchema = 1;

/// A required column is absent from a CSV.
class SchemaError : public std::runtime_error {
 public:
  explicit SchemaError(const std::string& column)
      : std::runtime_error("missing column: " + column), column_(column) {}
  const std::string& column() const { return column_; }

 private:
  std::string column_;
};

/// Shortest decimal that reads back to the same double.
std::string format_double(double v);
std::optional<double> parse_double(const std::string& s);

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  /// Throws SchemaError naming the column when absent.
  std::size_t column(const std::string& name) const;
  bool has_column(const std::string& name) const;
  void add_row(std::vector<std::string> r);
};

/// "# schema=1" line, header, rows; LF endings.
std::string to_csv(const CsvTable& t);
CsvTable parse_csv(const std::string& text);

void write_csv(const std::filesystem::path& p, const CsvTable& t);
CsvTable read_csv(const std::filesystem::path& p);

}  // namespace dmdlab
