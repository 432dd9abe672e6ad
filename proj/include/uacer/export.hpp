#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uacer/harness.hpp"

namespace uacer {

struct SeedSummary {
  std::uint64_t seed = 0;
  double final_robustness = 0.0;
  double stability_pct = 0.0;
  double worst_case_return = 0.0;
};

struct RunSummary {
  std::string run_id;
  std::string config_echo;
  double final_robustness = 0.0;   // means across seeds
  double stability_pct = 0.0;
  double worst_case_return = 0.0;
  double wall_clock_s = 0.0;       // the one field that varies between reruns
  std::vector<SeedSummary> seeds;
  std::vector<double> mass_grid, friction_grid;
  // Seed-averaged final return per (mass, friction) cell; rows follow
  // mass_grid, columns follow friction_grid.
  std::vector<std::vector<double>> cell_returns;
};

// One row per iteration, fixed column order, exact decimal round-trip.
// wall_clock_s is deliberately not a column so reruns are byte-identical.
std::string metrics_csv(const std::vector<RunRecord>& records);
void write_metrics_csv(const std::string& path, const std::vector<RunRecord>& records);
// Inverse of metrics_csv; wall_clock_s comes back as zero.
std::vector<RunRecord> read_metrics_csv(const std::string& path);

std::string summary_json(const RunSummary& summary);
void write_summary_json(const std::string& path, const RunSummary& summary);
RunSummary read_summary_json(const std::string& path);

// Content-derived hex id for a run.
std::string run_id(const std::string& payload);

// 1.96 * stderr of the values; 0 for fewer than two values.
double band_halfwidth(const std::vector<double>& values);

// Mean line with a shaded mean +- half band. xs, means, halves share a size.
std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<double>& xs,
                           const std::vector<double>& means,
                           const std::vector<double>& halves);

// One colored rect per cell; values[r][c] pairs row_labels[r] x col_labels[c].
std::string heatmap_svg(const std::string& title, const std::string& row_axis,
                        const std::string& col_axis, const std::vector<double>& row_labels,
                        const std::vector<double>& col_labels,
                        const std::vector<std::vector<double>>& values);

// Labeled vertical bars, one per entry.
std::string bar_chart_svg(const std::string& title, const std::string& x_label,
                          const std::string& y_label, const std::vector<std::string>& labels,
                          const std::vector<double>& values);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace uacer
