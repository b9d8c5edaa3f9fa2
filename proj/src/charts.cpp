// Copyright (C) 2026 The dmdlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "dmdlab/charts.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "dmdlab/config.hpp"

namespace dmdlab {

namespace fs = std::filesystem;

AxisRange axis_range(std::span<const double> values) {
  double lo = HUGE_VAL, hi = -HUGE_VAL;
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (lo > hi) return {};
  if (lo == hi) return {lo - 0.5, hi + 0.5};
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                    "#17becf", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string render_line_chart(const ChartSpec& spec) {
  std::vector<double> xs, ys;
  for (const auto& s : spec.series) {
    xs.insert(xs.end(), s.x.begin(), s.x.end());
    ys.insert(ys.end(), s.y.begin(), s.y.end());
  }
  const AxisRange rx = axis_range(xs), ry = axis_range(ys);
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - rx.lo) / (rx.hi - rx.lo) * pw; };
  auto py = [&](double y) { return kTop + ph - (y - ry.lo) / (ry.hi - ry.lo) * ph; };

  std::string o;
  o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kWidth) + "\" height=\"" + num(kHeight) + "\">\n";
  o += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o += "<text x=\"" + num(kWidth / 2) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" + escape(spec.title) +
       "</text>\n";
  o += "<g stroke=\"black\" fill=\"none\">\n";
  o += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop + ph) + "\" x2=\"" + num(kLeft + pw) + "\" y2=\"" +
       num(kTop + ph) + "\"/>\n";
  o += "<line x1=\"" + num(kLeft) + "\" y1=\"" + num(kTop) + "\" x2=\"" + num(kLeft) + "\" y2=\"" + num(kTop + ph) +
       "\"/>\n";
  o += "</g>\n<g font-size=\"11\">\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = rx.lo + (rx.hi - rx.lo) * i / 4.0, fy = ry.lo + (ry.hi - ry.lo) * i / 4.0;
    o += "<text x=\"" + num(px(fx)) + "\" y=\"" + num(kTop + ph + 16) + "\" text-anchor=\"middle\">" + tick(fx) +
         "</text>\n";
    o += "<text x=\"" + num(kLeft - 6) + "\" y=\"" + num(py(fy) + 4) + "\" text-anchor=\"end\">" + tick(fy) +
         "</text>\n";
  }
  o += "</g>\n";
  o += "<text x=\"" + num(kLeft + pw / 2) + "\" y=\"" + num(kHeight - 10) + "\" text-anchor=\"middle\" font-size=\"13\">" +
       escape(spec.x_label) + "</text>\n";
  o += "<text x=\"16\" y=\"" + num(kTop + ph / 2) + "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 " +
       num(kTop + ph / 2) + ")\">" + escape(spec.y_label) + "</text>\n";

  for (std::size_t k = 0; k < spec.series.size(); ++k) {
    const Series& s = spec.series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    std::string pts;
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (!pts.empty()) pts += ' ';
      pts += num(px(s.x[i])) + "," + num(py(s.y[i]));
    }
    o += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    o += "<text x=\"" + num(kLeft + pw - 4) + "\" y=\"" + num(kTop + 14 + 14.0 * static_cast<double>(k)) +
         "\" text-anchor=\"end\" font-size=\"11\" fill=\"" + color + "\">" + escape(s.name) + "</text>\n";
  }
  o += "</svg>\n";
  return o;
}

std::vector<Series> series_from_csv(const CsvTable& t, const std::string& x_col, const std::string& y_col,
                                    const std::string& group_col) {
  const std::size_t xi = t.column(x_col), yi = t.column(y_col);
  const std::size_t gi = group_col.empty() ? 0 : t.column(group_col);
  std::map<std::string, Series> groups;
  std::vector<std::string> order;
  for (const auto& row : t.rows) {
    const auto x = parse_double(row[xi]);
    const auto y = parse_double(row[yi]);
    if (!x || !y) continue;
    const std::string key = group_col.empty() ? y_col : row[gi];
    auto [it, fresh] = groups.try_emplace(key);
    if (fresh) {
      it->second.name = group_col.empty() ? y_col : group_col + "=" + key;
      order.push_back(key);
    }
    it->second.x.push_back(*x);
    it->second.y.push_back(*y);
  }
  std::vector<Series> out;
  for (const auto& k : order) out.push_back(groups[k]);
  return out;
}

namespace {

struct ChartRecipe {
  const char* csv;
  const char* svg;
  const char* title;
  const char* x;
  std::vector<const char*> y;
  const char* group;
  const char* y_label;
};

const std::vector<ChartRecipe>& recipes() {
  static const std::vector<ChartRecipe> r{
      {"train_log.csv", "fd_curve.svg", "FD to teacher samples", "iter", {"fd_to_teacher"}, "", "FD"},
      {"fd_curves.csv", "fd_curves.svg", "FD vs generator updates", "round", {"fd_to_teacher"}, "cell", "FD"},
      {"xi.csv", "xi_curve.svg", "normalized one-step reconstruction error", "t", {"xi"}, "", "xi(t)"},
      {"slack.csv", "slack.svg", "recursion slack per round", "k", {"slack_e", "slack_delta", "slack_dbar"}, "",
       "slack"},
  };
  return r;
}

}  // namespace

std::vector<fs::path> emit_charts(const fs::path& run_dir) {
  if (!fs::is_directory(run_dir)) throw ConfigError("charts: " + run_dir.string() + " is not a directory");
  std::vector<fs::path> csvs;
  for (const auto& e : fs::recursive_directory_iterator(run_dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") csvs.push_back(e.path());
  std::sort(csvs.begin(), csvs.end());

  std::vector<fs::path> written;
  for (const auto& p : csvs) {
    for (const auto& r : recipes()) {
      if (p.filename() != r.csv) continue;
      const CsvTable t = read_csv(p);
      ChartSpec spec{r.title, r.x, r.y_label, {}};
      for (const char* y : r.y)
        for (auto& s : series_from_csv(t, r.x, y, r.group)) spec.series.push_back(std::move(s));
      const fs::path out = p.parent_path() / r.svg;
      write_text(out, render_line_chart(spec));
      written.push_back(out);
    }
  }
  return written;
}

}  // namespace dmdlab
