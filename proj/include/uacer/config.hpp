#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "uacer/harness.hpp"

namespace uacer {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Full experiment configuration. Field defaults are the reference
// hyperparameters; a config file only needs the keys it overrides.
struct RunConfig {
  std::string env = "point_mass";
  double f_max = 0.5;
  int horizon = 500;
  std::string variant = "full";
  int k = 5;
  std::string mode = "tdu_exponential";
  double beta0 = 0.85;
  double beta_min = 0.15;
  double lambda = 3.0;
  int iterations = 200;
  int episodes_per_iteration = 5;
  int eval_interval = 5;
  int eval_rollouts = 10;
  std::vector<int> hidden{256, 256, 256};
  double gamma = 0.99;
  double tau = 5e-3;
  int target_update_interval = 1;
  double lr_critic = 3e-4;
  double lr_actor = 1e-4;
  double lr_alpha = 3e-4;
  double initial_alpha = 5e-3;
  std::uint64_t replay_capacity = 1'000'000;
  std::uint64_t replay_min_fill = 3'000;
  std::uint64_t warmup_steps = 5'000;
  std::uint64_t batch_size = 256;
  double updates_per_step = 1.0;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::vector<double> mass_grid{0.5, 0.75, 1.0, 1.25, 1.5};
  std::vector<double> friction_grid{0.5, 0.75, 1.0, 1.25, 1.5};
  std::vector<int> k_sweep{2, 3, 5, 7, 10};
  int adversary_eval_iterations = 50;
  bool contract_checks = true;
  std::string out_dir = "runs/default";

  TrainSetup to_train_setup() const;
};

// Strict `key = value` lines; '#' starts a comment; lists are comma
// separated. Unknown keys are rejected with a nearest-key suggestion, and a
// repeated key is an error.
RunConfig parse_config(const std::string& text);

// parse_config over the file contents; unreadable path -> ConfigError.
RunConfig load_config(const std::string& path);

// Canonical echo of every key in a fixed order. Pure: equal configs yield
// byte-identical text, and parse_config(resolved_echo(c)) reproduces c.
std::string resolved_echo(const RunConfig& config);

// Shortest decimal form that strtod parses back to the same bits.
std::string format_double(double value);

}  // namespace uacer
