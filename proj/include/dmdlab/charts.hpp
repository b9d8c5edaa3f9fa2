// Copyright (C) 2026 The dmdlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dmdlab/csv.hpp"

namespace dmdlab {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct ChartSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

struct AxisRange {
  double lo = 0.0;
  double hi = 1.0;
};

/// Padded range covering every finite value; [0, 1] when there are none.
AxisRange axis_range(std::span<const double> values);

/// Deterministic SVG line chart.
std::string render_line_chart(const ChartSpec& spec);

/// Series from a CSV: one per distinct value of group_col (or one overall),
/// skipping rows whose y cell is empty.
std::vector<Series> series_from_csv(const CsvTable& t, const std::string& x_col, const std::string& y_col,
                                    const std::string& group_col = "");

/// Renders every known CSV under run_dir (recursively, in sorted order) to an
/// SVG beside it. Returns the written paths.
std::vector<std::filesystem::path> emit_charts(const std::filesystem::path& run_dir);

}  // namespace dmdlab
