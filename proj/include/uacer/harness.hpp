#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "uacer/game.hpp"
#include "uacer/sac.hpp"
#include "uacer/tdu.hpp"

namespace uacer {

// Per-iteration training metrics. wall_clock_s is the only field that is not
// reproducible bit-for-bit across reruns, so exports keep it out of the
// deterministic CSV.
struct RunRecord {
  int iteration = 0;
  double protagonist_return = 0.0;  // mean collection return, protagonist phase
  double adversary_return = 0.0;    // mean collection return (-r), adversary phase
  double beta = 0.0;                // schedule weight at this iteration
  bool has_robustness = false;      // true on evaluation iterations
  double robustness = 0.0;
  double critic_loss_prot = 0.0, actor_loss_prot = 0.0, alpha_loss_prot = 0.0,
         alpha_prot = 0.0;
  double critic_loss_adv = 0.0, actor_loss_adv = 0.0, alpha_loss_adv = 0.0, alpha_adv = 0.0;
  int updates_prot = 0, updates_adv = 0;
  double wall_clock_s = 0.0;
};

struct TrainSetup {
  std::string env_name = "point_mass";
  double f_max = 0.0;  // 0 keeps the task default
  int horizon = 0;     // 0 keeps the task default
  std::string variant = "full";
  AgentConfig agent;  // obs/action dims and schedule N are filled in by train()

  int iterations = 200;
  int episodes_per_phase = 5;
  int eval_interval = 5;
  int eval_rollouts = 10;
  std::vector<double> mass_grid{0.5, 0.75, 1.0, 1.25, 1.5};
  std::vector<double> friction_grid{0.5, 0.75, 1.0, 1.25, 1.5};

  std::size_t replay_capacity = 1'000'000;
  std::size_t replay_min_fill = 3'000;
  std::size_t warmup_steps = 5'000;  // uniform-random actions before this
  std::size_t batch_size = 256;
  double updates_per_step = 1.0;

  bool contract_checks = true;       // zero-sum + frozen-phase assertions
  std::string diagnostics_dir;       // non-finite-loss checkpoint dump location

  void validate() const;
};

struct TrainResult {
  SacAgent protagonist;
  SacAgent adversary;
  std::vector<RunRecord> records;
  // (iteration, score) pairs in evaluation order
  std::vector<std::pair<int, double>> robustness_series;
};

// Alternating zero-sum loop: each iteration trains the adversary with the
// protagonist frozen, then the protagonist with the adversary frozen, and
// runs an adversary-free robustness evaluation every eval_interval
// iterations. Throws std::logic_error on a contract violation and
// std::runtime_error (after dumping a diagnostic checkpoint) on non-finite
// losses.
TrainResult train(const TrainSetup& setup, std::uint64_t seed);

// Mean of cell_return over the grid cross product; the synthetic-testable
// core of the robustness protocol.
double grid_mean(const std::vector<double>& mass_grid, const std::vector<double>& friction_grid,
                 const std::function<double(double mass_scale, double friction_scale)>& cell_return);

// Average deterministic adversary-free return over the sweep grid.
double robustness_eval(Env& env, Actor& protagonist, const std::vector<double>& mass_grid,
                       const std::vector<double>& friction_grid, int episodes_per_cell = 10);

// Mean percentage decrease between consecutive scores; increases count as
// zero. Pairs with a zero left value are skipped (warned once on stderr).
double stability_metric(const std::vector<double>& robustness_series);

// Trains a fresh adversary against the frozen protagonist, then reports the
// protagonist's mean deterministic return over eval_episodes against it.
double final_adversarial_eval(const SacAgent& protagonist, const TrainSetup& setup,
                              int adversary_iterations, std::uint64_t seed,
                              int eval_episodes = 10);

struct OracleSpec {
  double q_star = 0.0;
  double sigma = 1.0;
  int k = 5;
  TduSchedule schedule;  // must be the exponential mode
  int trials = 100'000;
};

struct TheoremReport {
  double beta_end = 0.0;           // schedule weight at n = N
  double mean_abs_error = 0.0;     // E|Q_E - Q*| at n = N
  double mean_abs_error_se = 0.0;
  double mean_abs_mu_dev = 0.0;    // E|mu_Q - Q*| (the beta -> 0 limit of the error)
  double mean_abs_mu_dev_se = 0.0;
  double mean_sigma_q = 0.0;       // E[sigma_Q]
  double signed_bias = 0.0;        // E[Q_E - Q*]
  double signed_bias_se = 0.0;
  double expected_signed_bias = 0.0;  // beta(N) * c4(K) * sigma
  double folded_limit = 0.0;          // sigma * sqrt(2 / (pi K))
  double triangle_bound = 0.0;        // E|mu - Q*| + beta(N) * E[sigma_Q]
  bool bound_holds = false;           // mean_abs_error <= triangle_bound (+fp slack)
};

// Monte-Carlo check of the aggregate's bias structure under K iid normal
// critics. Requires >= 1000 trials and an exponential-mode schedule.
TheoremReport validate_theorem1(const OracleSpec& oracle, std::uint64_t seed);

// Finite-sample mean of the Bessel-corrected standard deviation under
// normality, as a fraction of sigma.
double c4_correction(int k);

// Runs fn(0..count-1) on a bounded pool. workers <= 1 runs inline. The first
// exception thrown by any job is rethrown after all threads join.
void parallel_for(std::size_t count, int workers,
                  const std::function<void(std::size_t)>& fn);

// UACER_WORKERS env var, else hardware concurrency, capped by jobs.
int default_worker_count(std::size_t jobs);

}  // namespace uacer
