#include "uacer/export.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "uacer/config.hpp"

namespace uacer {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr const char* kMetricsHeader =
    "iteration,protagonist_return,adversary_return,beta,robustness,"
    "critic_loss_prot,actor_loss_prot,alpha_loss_prot,alpha_prot,"
    "critic_loss_adv,actor_loss_adv,alpha_loss_adv,alpha_adv,"
    "updates_prot,updates_adv";

std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_field(const std::string& s, const char* what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw std::runtime_error(std::string("metrics csv: bad ") + what + " field '" + s + "'");
  }
  if (used != s.size())
    throw std::runtime_error(std::string("metrics csv: bad ") + what + " field '" + s + "'");
  return v;
}

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string fmt_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

struct AxisScale {
  double lo = 0.0, hi = 1.0;
  double px_lo = 0.0, px_hi = 1.0;

  double map(double v) const { return px_lo + (v - lo) / (hi - lo) * (px_hi - px_lo); }
};

AxisScale make_scale(double lo, double hi, double px_lo, double px_hi) {
  if (!(hi > lo)) {
    const double pad = std::max(1.0, std::abs(lo));
    lo -= pad;
    hi += pad;
  } else {
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
  return AxisScale{lo, hi, px_lo, px_hi};
}

void append_text(std::string& svg, double x, double y, const char* anchor, int size,
                 const std::string& text, bool rotated = false) {
  svg += "<text x=\"" + fmt2(x) + "\" y=\"" + fmt2(y) + "\" text-anchor=\"" + anchor +
         "\" font-family=\"sans-serif\" font-size=\"" + std::to_string(size) + "\"";
  if (rotated) svg += " transform=\"rotate(-90 " + fmt2(x) + " " + fmt2(y) + ")\"";
  svg += ">" + text + "</text>\n";
}

void append_axes(std::string& svg, const AxisScale& x, const AxisScale& y,
                 const std::string& x_label, const std::string& y_label,
                 const std::string& title) {
  svg += "<line x1=\"" + fmt2(x.px_lo) + "\" y1=\"" + fmt2(y.px_lo) + "\" x2=\"" +
         fmt2(x.px_hi) + "\" y2=\"" + fmt2(y.px_lo) + "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + fmt2(x.px_lo) + "\" y1=\"" + fmt2(y.px_lo) + "\" x2=\"" +
         fmt2(x.px_lo) + "\" y2=\"" + fmt2(y.px_hi) + "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double tx = x.lo + (x.hi - x.lo) * i / 4.0;
    const double ty = y.lo + (y.hi - y.lo) * i / 4.0;
    const double px = x.map(tx);
    const double py = y.map(ty);
    svg += "<line x1=\"" + fmt2(px) + "\" y1=\"" + fmt2(y.px_lo) + "\" x2=\"" + fmt2(px) +
           "\" y2=\"" + fmt2(y.px_lo + 4) + "\" stroke=\"black\"/>\n";
    append_text(svg, px, y.px_lo + 18, "middle", 11, fmt_tick(tx));
    svg += "<line x1=\"" + fmt2(x.px_lo - 4) + "\" y1=\"" + fmt2(py) + "\" x2=\"" +
           fmt2(x.px_lo) + "\" y2=\"" + fmt2(py) + "\" stroke=\"black\"/>\n";
    append_text(svg, x.px_lo - 8, py + 4, "end", 11, fmt_tick(ty));
  }
  append_text(svg, (x.px_lo + x.px_hi) / 2, y.px_lo + 38, "middle", 13, x_label);
  append_text(svg, x.px_lo - 55, (y.px_lo + y.px_hi) / 2, "middle", 13, y_label, true);
  append_text(svg, (x.px_lo + x.px_hi) / 2, 24, "middle", 15, title);
}

std::string svg_open(int w, int h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) +
         "\" height=\"" + std::to_string(h) + "\" viewBox=\"0 0 " + std::to_string(w) + " " +
         std::to_string(h) + "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

std::string cell_color(double v, double lo, double hi) {
  double t = hi > lo ? (v - lo) / (hi - lo) : 0.5;
  t = std::min(1.0, std::max(0.0, t));
  // dark blue (low) to pale yellow (high)
  const int r = static_cast<int>(std::lround(49 + t * (255 - 49)));
  const int g = static_cast<int>(std::lround(54 + t * (255 - 54)));
  const int b = static_cast<int>(std::lround(149 + t * (191 - 149)));
  char buf[16];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
  return buf;
}

}  // namespace

std::string metrics_csv(const std::vector<RunRecord>& records) {
  if (records.empty()) throw std::invalid_argument("metrics csv needs at least one record");
  std::string out = kMetricsHeader;
  out += "\n";
  for (const RunRecord& r : records) {
    out += std::to_string(r.iteration);
    out += "," + format_double(r.protagonist_return);
    out += "," + format_double(r.adversary_return);
    out += "," + format_double(r.beta);
    out += ",";
    if (r.has_robustness) out += format_double(r.robustness);
    out += "," + format_double(r.critic_loss_prot);
    out += "," + format_double(r.actor_loss_prot);
    out += "," + format_double(r.alpha_loss_prot);
    out += "," + format_double(r.alpha_prot);
    out += "," + format_double(r.critic_loss_adv);
    out += "," + format_double(r.actor_loss_adv);
    out += "," + format_double(r.alpha_loss_adv);
    out += "," + format_double(r.alpha_adv);
    out += "," + std::to_string(r.updates_prot);
    out += "," + std::to_string(r.updates_adv);
    out += "\n";
  }
  return out;
}

void write_metrics_csv(const std::string& path, const std::vector<RunRecord>& records) {
  write_text_file(path, metrics_csv(records));
}

std::vector<RunRecord> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read metrics csv '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader)
    throw std::runtime_error("metrics csv '" + path + "': unexpected header");
  std::vector<RunRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv_row(line);
    if (f.size() != 15)
      throw std::runtime_error("metrics csv '" + path + "': expected 15 fields, got " +
                               std::to_string(f.size()));
    RunRecord r;
    r.iteration = static_cast<int>(parse_field(f[0], "iteration"));
    r.protagonist_return = parse_field(f[1], "protagonist_return");
    r.adversary_return = parse_field(f[2], "adversary_return");
    r.beta = parse_field(f[3], "beta");
    r.has_robustness = !f[4].empty();
    r.robustness = r.has_robustness ? parse_field(f[4], "robustness") : 0.0;
    r.critic_loss_prot = parse_field(f[5], "critic_loss_prot");
    r.actor_loss_prot = parse_field(f[6], "actor_loss_prot");
    r.alpha_loss_prot = parse_field(f[7], "alpha_loss_prot");
    r.alpha_prot = parse_field(f[8], "alpha_prot");
    r.critic_loss_adv = parse_field(f[9], "critic_loss_adv");
    r.actor_loss_adv = parse_field(f[10], "actor_loss_adv");
    r.alpha_loss_adv = parse_field(f[11], "alpha_loss_adv");
    r.alpha_adv = parse_field(f[12], "alpha_adv");
    r.updates_prot = static_cast<int>(parse_field(f[13], "updates_prot"));
    r.updates_adv = static_cast<int>(parse_field(f[14], "updates_adv"));
    records.push_back(std::move(r));
  }
  return records;
}

std::string summary_json(const RunSummary& summary) {
  ordered_json j;
  j["run_id"] = summary.run_id;
  j["final_robustness"] = summary.final_robustness;
  j["stability_pct"] = summary.stability_pct;
  j["worst_case_return"] = summary.worst_case_return;
  j["wall_clock_s"] = summary.wall_clock_s;
  j["seeds"] = ordered_json::array();
  for (const SeedSummary& s : summary.seeds) {
    ordered_json js;
    js["seed"] = s.seed;
    js["final_robustness"] = s.final_robustness;
    js["stability_pct"] = s.stability_pct;
    js["worst_case_return"] = s.worst_case_return;
    j["seeds"].push_back(std::move(js));
  }
  j["mass_grid"] = summary.mass_grid;
  j["friction_grid"] = summary.friction_grid;
  j["cell_returns"] = summary.cell_returns;
  j["config"] = summary.config_echo;
  return j.dump(2) + "\n";
}

void write_summary_json(const std::string& path, const RunSummary& summary) {
  write_text_file(path, summary_json(summary));
}

RunSummary read_summary_json(const std::string& path) {
  const ordered_json j = ordered_json::parse(read_text_file(path));
  RunSummary summary;
  summary.run_id = j.at("run_id").get<std::string>();
  summary.final_robustness = j.at("final_robustness").get<double>();
  summary.stability_pct = j.at("stability_pct").get<double>();
  summary.worst_case_return = j.at("worst_case_return").get<double>();
  summary.wall_clock_s = j.at("wall_clock_s").get<double>();
  for (const auto& js : j.at("seeds")) {
    SeedSummary s;
    s.seed = js.at("seed").get<std::uint64_t>();
    s.final_robustness = js.at("final_robustness").get<double>();
    s.stability_pct = js.at("stability_pct").get<double>();
    s.worst_case_return = js.at("worst_case_return").get<double>();
    summary.seeds.push_back(s);
  }
  summary.mass_grid = j.at("mass_grid").get<std::vector<double>>();
  summary.friction_grid = j.at("friction_grid").get<std::vector<double>>();
  summary.cell_returns = j.at("cell_returns").get<std::vector<std::vector<double>>>();
  summary.config_echo = j.at("config").get<std::string>();
  return summary;
}

std::string run_id(const std::string& payload) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : payload) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

double band_halfwidth(const std::vector<double>& values) {
  const std::size_t n = values.size();
  if (n < 2) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double var = ss / static_cast<double>(n - 1);
  return 1.96 * std::sqrt(var / static_cast<double>(n));
}

std::string line_chart_svg(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<double>& xs,
                           const std::vector<double>& means,
                           const std::vector<double>& halves) {
  if (xs.size() != means.size() || xs.size() != halves.size())
    throw std::invalid_argument("line chart: xs, means, halves must have equal sizes");
  std::string svg = svg_open(640, 420);
  if (xs.empty()) {
    append_text(svg, 320, 210, "middle", 14, "no data");
    return svg + "</svg>\n";
  }
  double x_lo = xs.front(), x_hi = xs.front();
  double y_lo = means.front() - halves.front(), y_hi = means.front() + halves.front();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    x_lo = std::min(x_lo, xs[i]);
    x_hi = std::max(x_hi, xs[i]);
    y_lo = std::min(y_lo, means[i] - halves[i]);
    y_hi = std::max(y_hi, means[i] + halves[i]);
  }
  const AxisScale sx = make_scale(x_lo, x_hi, 70, 610);
  const AxisScale sy = make_scale(y_lo, y_hi, 370, 50);
  // Confidence band: upper edge left to right, lower edge back.
  std::string band = "<polygon fill=\"#c6dbef\" stroke=\"none\" points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i)
    band += fmt2(sx.map(xs[i])) + "," + fmt2(sy.map(means[i] + halves[i])) + " ";
  for (std::size_t i = xs.size(); i-- > 0;)
    band += fmt2(sx.map(xs[i])) + "," + fmt2(sy.map(means[i] - halves[i])) + " ";
  band += "\"/>\n";
  svg += band;
  std::string line = "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i)
    line += fmt2(sx.map(xs[i])) + "," + fmt2(sy.map(means[i])) + " ";
  line += "\"/>\n";
  svg += line;
  for (std::size_t i = 0; i < xs.size(); ++i)
    svg += "<circle cx=\"" + fmt2(sx.map(xs[i])) + "\" cy=\"" + fmt2(sy.map(means[i])) +
           "\" r=\"3\" fill=\"#1f77b4\"/>\n";
  append_axes(svg, sx, sy, x_label, y_label, title);
  return svg + "</svg>\n";
}

std::string heatmap_svg(const std::string& title, const std::string& row_axis,
                        const std::string& col_axis, const std::vector<double>& row_labels,
                        const std::vector<double>& col_labels,
                        const std::vector<std::vector<double>>& values) {
  const std::size_t rows = row_labels.size();
  const std::size_t cols = col_labels.size();
  if (rows == 0 || cols == 0) throw std::invalid_argument("heatmap: empty grid");
  if (values.size() != rows) throw std::invalid_argument("heatmap: row count mismatch");
  for (const auto& row : values)
    if (row.size() != cols) throw std::invalid_argument("heatmap: column count mismatch");
  double lo = values[0][0], hi = values[0][0];
  for (const auto& row : values)
    for (double v : row) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  const double px_x0 = 100, px_y0 = 60;
  const double cell_w = 440.0 / static_cast<double>(cols);
  const double cell_h = 300.0 / static_cast<double>(rows);
  std::string svg = svg_open(640, 440);
  append_text(svg, 320, 28, "middle", 15, title);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double x = px_x0 + static_cast<double>(c) * cell_w;
      const double y = px_y0 + static_cast<double>(r) * cell_h;
      svg += "<rect x=\"" + fmt2(x) + "\" y=\"" + fmt2(y) + "\" width=\"" + fmt2(cell_w) +
             "\" height=\"" + fmt2(cell_h) + "\" fill=\"" + cell_color(values[r][c], lo, hi) +
             "\" stroke=\"white\"/>\n";
      append_text(svg, x + cell_w / 2, y + cell_h / 2 + 4, "middle", 11,
                  fmt_tick(values[r][c]));
    }
    append_text(svg, px_x0 - 8, px_y0 + (static_cast<double>(r) + 0.5) * cell_h + 4, "end", 11,
                fmt_tick(row_labels[r]));
  }
  for (std::size_t c = 0; c < cols; ++c)
    append_text(svg, px_x0 + (static_cast<double>(c) + 0.5) * cell_w,
                px_y0 + 300.0 + 18, "middle", 11, fmt_tick(col_labels[c]));
  append_text(svg, px_x0 + 220, px_y0 + 300.0 + 40, "middle", 13, col_axis);
  append_text(svg, px_x0 - 60, px_y0 + 150, "middle", 13, row_axis, true);
  append_text(svg, 560, px_y0 + 10, "start", 11, "min " + fmt_tick(lo));
  append_text(svg, 560, px_y0 + 28, "start", 11, "max " + fmt_tick(hi));
  return svg + "</svg>\n";
}

std::string bar_chart_svg(const std::string& title, const std::string& x_label,
                          const std::string& y_label, const std::vector<std::string>& labels,
                          const std::vector<double>& values) {
  if (labels.size() != values.size())
    throw std::invalid_argument("bar chart: labels/values size mismatch");
  std::string svg = svg_open(640, 420);
  if (values.empty()) {
    append_text(svg, 320, 210, "middle", 14, "no data");
    return svg + "</svg>\n";
  }
  double lo = std::min(0.0, *std::min_element(values.begin(), values.end()));
  double hi = std::max(0.0, *std::max_element(values.begin(), values.end()));
  const AxisScale sy = make_scale(lo, hi, 370, 50);
  const AxisScale sx{0.0, static_cast<double>(values.size()), 70, 610};
  const double slot = (sx.px_hi - sx.px_lo) / static_cast<double>(values.size());
  const double zero_y = sy.map(0.0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double x = sx.px_lo + static_cast<double>(i) * slot + 0.15 * slot;
    const double y = sy.map(values[i]);
    const double top = std::min(y, zero_y);
    const double height = std::abs(y - zero_y);
    svg += "<rect x=\"" + fmt2(x) + "\" y=\"" + fmt2(top) + "\" width=\"" + fmt2(0.7 * slot) +
           "\" height=\"" + fmt2(height) + "\" fill=\"#1f77b4\"/>\n";
    append_text(svg, x + 0.35 * slot, top - 6, "middle", 11, fmt_tick(values[i]));
    append_text(svg, x + 0.35 * slot, 388, "middle", 12, labels[i]);
  }
  svg += "<line x1=\"" + fmt2(sx.px_lo) + "\" y1=\"" + fmt2(zero_y) + "\" x2=\"" +
         fmt2(sx.px_hi) + "\" y2=\"" + fmt2(zero_y) + "\" stroke=\"black\"/>\n";
  append_text(svg, 320, 410, "middle", 13, x_label);
  append_text(svg, 20, 210, "middle", 13, y_label, true);
  append_text(svg, 320, 24, "middle", 15, title);
  return svg + "</svg>\n";
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file '" + path + "'");
  out << content;
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace uacer
