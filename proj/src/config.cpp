#include "uacer/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "uacer/game.hpp"
#include "uacer/sac.hpp"
#include "uacer/tdu.hpp"

namespace uacer {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss(s);
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  if (!out.empty() && out.back().empty()) out.pop_back();
  return out;
}

int edit_distance(const std::string& a, const std::string& b) {
  std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

[[noreturn]] void fail_value(const std::string& key, const std::string& value,
                             const char* expected) {
  throw ConfigError("config key '" + key + "': cannot parse '" + value + "' as " + expected);
}

long long parse_int(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(value, &used);
  } catch (const std::exception&) {
    fail_value(key, value, "an integer");
  }
  if (used != value.size()) fail_value(key, value, "an integer");
  return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
  const long long v = parse_int(key, value);
  if (v < 0) fail_value(key, value, "a non-negative integer");
  return static_cast<std::uint64_t>(v);
}

double parse_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    fail_value(key, value, "a number");
  }
  if (used != value.size()) fail_value(key, value, "a number");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  fail_value(key, value, "a boolean (true/false)");
}

// One setter per key keeps the key table, parser, and echo in one place.
using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& key_table() {
  static const std::map<std::string, Setter> table = {
      {"env",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v != "point_mass" && v != "pendulum")
           throw ConfigError("config key '" + k + "': unknown environment '" + v + "'");
         c.env = v;
       }},
      {"f_max",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.f_max = parse_double(k, v);
         if (!(c.f_max > 0.0)) throw ConfigError("config key 'f_max': must be positive");
       }},
      {"horizon",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.horizon = static_cast<int>(parse_int(k, v));
         if (c.horizon < 1) throw ConfigError("config key 'horizon': must be >= 1");
       }},
      {"variant",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         try {
           variant_mode(v);
         } catch (const std::invalid_argument& e) {
           throw ConfigError("config key '" + k + "': " + e.what());
         }
         c.variant = v;
       }},
      {"k",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.k = static_cast<int>(parse_int(k, v));
         if (c.k < 2) throw ConfigError("config key 'k': must be >= 2");
       }},
      {"mode",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         try {
           aggregation_mode_from_string(v);
         } catch (const std::invalid_argument& e) {
           throw ConfigError("config key '" + k + "': " + e.what());
         }
         c.mode = v;
       }},
      {"beta0", [](RunConfig& c, const std::string& k,
                   const std::string& v) { c.beta0 = parse_double(k, v); }},
      {"beta_min", [](RunConfig& c, const std::string& k,
                      const std::string& v) { c.beta_min = parse_double(k, v); }},
      {"lambda", [](RunConfig& c, const std::string& k,
                    const std::string& v) { c.lambda = parse_double(k, v); }},
      {"iterations",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.iterations = static_cast<int>(parse_int(k, v));
       }},
      {"episodes_per_iteration",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.episodes_per_iteration = static_cast<int>(parse_int(k, v));
       }},
      {"eval_interval",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.eval_interval = static_cast<int>(parse_int(k, v));
       }},
      {"eval_rollouts",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.eval_rollouts = static_cast<int>(parse_int(k, v));
       }},
      {"hidden",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.hidden.clear();
         for (const std::string& item : split_list(v)) {
           const int width = static_cast<int>(parse_int(k, item));
           if (width < 1) throw ConfigError("config key 'hidden': widths must be >= 1");
           c.hidden.push_back(width);
         }
         if (c.hidden.empty()) throw ConfigError("config key 'hidden': list is empty");
       }},
      {"gamma", [](RunConfig& c, const std::string& k,
                   const std::string& v) { c.gamma = parse_double(k, v); }},
      {"tau", [](RunConfig& c, const std::string& k,
                 const std::string& v) { c.tau = parse_double(k, v); }},
      {"target_update_interval",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.target_update_interval = static_cast<int>(parse_int(k, v));
       }},
      {"lr_critic", [](RunConfig& c, const std::string& k,
                       const std::string& v) { c.lr_critic = parse_double(k, v); }},
      {"lr_actor", [](RunConfig& c, const std::string& k,
                      const std::string& v) { c.lr_actor = parse_double(k, v); }},
      {"lr_alpha", [](RunConfig& c, const std::string& k,
                      const std::string& v) { c.lr_alpha = parse_double(k, v); }},
      {"initial_alpha", [](RunConfig& c, const std::string& k,
                           const std::string& v) { c.initial_alpha = parse_double(k, v); }},
      {"replay_capacity", [](RunConfig& c, const std::string& k,
                             const std::string& v) { c.replay_capacity = parse_uint(k, v); }},
      {"replay_min_fill", [](RunConfig& c, const std::string& k,
                             const std::string& v) { c.replay_min_fill = parse_uint(k, v); }},
      {"warmup_steps", [](RunConfig& c, const std::string& k,
                          const std::string& v) { c.warmup_steps = parse_uint(k, v); }},
      {"batch_size", [](RunConfig& c, const std::string& k,
                        const std::string& v) { c.batch_size = parse_uint(k, v); }},
      {"updates_per_step", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.updates_per_step = parse_double(k, v);
       }},
      {"seeds",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.seeds.clear();
         for (const std::string& item : split_list(v)) c.seeds.push_back(parse_uint(k, item));
         if (c.seeds.empty()) throw ConfigError("config key 'seeds': list is empty");
       }},
      {"mass_grid",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.mass_grid.clear();
         for (const std::string& item : split_list(v))
           c.mass_grid.push_back(parse_double(k, item));
       }},
      {"friction_grid",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.friction_grid.clear();
         for (const std::string& item : split_list(v))
           c.friction_grid.push_back(parse_double(k, item));
       }},
      {"k_sweep",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.k_sweep.clear();
         for (const std::string& item : split_list(v)) {
           const int kk = static_cast<int>(parse_int(k, item));
           if (kk < 2) throw ConfigError("config key 'k_sweep': entries must be >= 2");
           c.k_sweep.push_back(kk);
         }
         if (c.k_sweep.empty()) throw ConfigError("config key 'k_sweep': list is empty");
       }},
      {"adversary_eval_iterations",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.adversary_eval_iterations = static_cast<int>(parse_int(k, v));
         if (c.adversary_eval_iterations < 0)
           throw ConfigError("config key 'adversary_eval_iterations': must be >= 0");
       }},
      {"contract_checks",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.contract_checks = parse_bool(k, v);
       }},
      {"out_dir", [](RunConfig& c, const std::string&, const std::string& v) { c.out_dir = v; }},
  };
  return table;
}

std::string nearest_key(const std::string& key) {
  std::string best;
  int best_dist = 1 << 20;
  for (const auto& [name, setter] : key_table()) {
    const int d = edit_distance(key, name);
    if (d < best_dist) {
      best_dist = d;
      best = name;
    }
  }
  return best_dist <= 3 ? best : std::string();
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ",";
    out += items[i];
  }
  return out;
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof(buf), "%.*g", precision, value);
    if (std::strtod(buf, nullptr) == value) return buf;
  }
  return buf;
}

RunConfig parse_config(const std::string& text) {
  RunConfig config;
  std::set<std::string> seen;
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = key_table().find(key);
    if (it == key_table().end()) {
      std::string message = "unknown config key '" + key + "'";
      const std::string suggestion = nearest_key(key);
      if (!suggestion.empty()) message += " (did you mean '" + suggestion + "'?)";
      throw ConfigError(message);
    }
    if (!seen.insert(key).second)
      throw ConfigError("config key '" + key + "' appears more than once");
    it->second(config, key, value);
  }
  return config;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string resolved_echo(const RunConfig& c) {
  const auto fmt_doubles = [](const std::vector<double>& v) {
    std::vector<std::string> items;
    items.reserve(v.size());
    for (double x : v) items.push_back(format_double(x));
    return join(items);
  };
  const auto fmt_ints = [](const auto& v) {
    std::vector<std::string> items;
    items.reserve(v.size());
    for (auto x : v) items.push_back(std::to_string(x));
    return join(items);
  };
  std::string out;
  out += "env = " + c.env + "\n";
  out += "f_max = " + format_double(c.f_max) + "\n";
  out += "horizon = " + std::to_string(c.horizon) + "\n";
  out += "variant = " + c.variant + "\n";
  out += "k = " + std::to_string(c.k) + "\n";
  out += "mode = " + c.mode + "\n";
  out += "beta0 = " + format_double(c.beta0) + "\n";
  out += "beta_min = " + format_double(c.beta_min) + "\n";
  out += "lambda = " + format_double(c.lambda) + "\n";
  out += "iterations = " + std::to_string(c.iterations) + "\n";
  out += "episodes_per_iteration = " + std::to_string(c.episodes_per_iteration) + "\n";
  out += "eval_interval = " + std::to_string(c.eval_interval) + "\n";
  out += "eval_rollouts = " + std::to_string(c.eval_rollouts) + "\n";
  out += "hidden = " + fmt_ints(c.hidden) + "\n";
  out += "gamma = " + format_double(c.gamma) + "\n";
  out += "tau = " + format_double(c.tau) + "\n";
  out += "target_update_interval = " + std::to_string(c.target_update_interval) + "\n";
  out += "lr_critic = " + format_double(c.lr_critic) + "\n";
  out += "lr_actor = " + format_double(c.lr_actor) + "\n";
  out += "lr_alpha = " + format_double(c.lr_alpha) + "\n";
  out += "initial_alpha = " + format_double(c.initial_alpha) + "\n";
  out += "replay_capacity = " + std::to_string(c.replay_capacity) + "\n";
  out += "replay_min_fill = " + std::to_string(c.replay_min_fill) + "\n";
  out += "warmup_steps = " + std::to_string(c.warmup_steps) + "\n";
  out += "batch_size = " + std::to_string(c.batch_size) + "\n";
  out += "updates_per_step = " + format_double(c.updates_per_step) + "\n";
  out += "seeds = " + fmt_ints(c.seeds) + "\n";
  out += "mass_grid = " + fmt_doubles(c.mass_grid) + "\n";
  out += "friction_grid = " + fmt_doubles(c.friction_grid) + "\n";
  out += "k_sweep = " + fmt_ints(c.k_sweep) + "\n";
  out += "adversary_eval_iterations = " + std::to_string(c.adversary_eval_iterations) + "\n";
  out += "contract_checks = " + std::string(c.contract_checks ? "true" : "false") + "\n";
  out += "out_dir = " + c.out_dir + "\n";
  return out;
}

TrainSetup RunConfig::to_train_setup() const {
  TrainSetup setup;
  setup.env_name = env;
  setup.f_max = f_max;
  setup.horizon = horizon;
  setup.variant = variant;
  setup.iterations = iterations;
  setup.episodes_per_phase = episodes_per_iteration;
  setup.eval_interval = eval_interval;
  setup.eval_rollouts = eval_rollouts;
  setup.mass_grid = mass_grid;
  setup.friction_grid = friction_grid;
  setup.replay_capacity = replay_capacity;
  setup.replay_min_fill = replay_min_fill;
  setup.warmup_steps = warmup_steps;
  setup.batch_size = batch_size;
  setup.updates_per_step = updates_per_step;
  setup.contract_checks = contract_checks;
  setup.agent.hidden = hidden;
  setup.agent.k = k;
  setup.agent.schedule.beta0 = beta0;
  setup.agent.schedule.beta_min = beta_min;
  setup.agent.schedule.lambda = lambda;
  setup.agent.schedule.mode = aggregation_mode_from_string(mode);
  setup.agent.schedule.total_iterations = iterations;
  setup.agent.gamma = gamma;
  setup.agent.tau = tau;
  setup.agent.target_update_interval = target_update_interval;
  setup.agent.lr_critic = lr_critic;
  setup.agent.lr_actor = lr_actor;
  setup.agent.lr_alpha = lr_alpha;
  setup.agent.initial_alpha = initial_alpha;
  return setup;
}

}  // namespace uacer
