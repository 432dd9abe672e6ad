#include "uacer/harness.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace uacer {

namespace {

bool contains_nominal(const std::vector<double>& grid) {
  for (double v : grid)
    if (v == 1.0) return true;
  return false;
}

struct PhaseStats {
  double mean_return = 0.0;  // the learning agent's return
  std::size_t steps = 0;
};

// Runs full episodes with both policies acting stochastically (uniform random
// before warmup_steps total environment steps) and pushes every joint
// transition into the shared buffer.
PhaseStats collect_episodes(Env& env, const SacAgent& protagonist, const SacAgent& adversary,
                            bool learner_is_adversary, ReplayBuffer& buffer, int episodes,
                            std::size_t warmup_steps, std::size_t& total_steps, Rng& rng,
                            bool contract_checks) {
  PhaseStats stats;
  const int p_dim = env.spec().protagonist_dim;
  const int a_dim = env.spec().adversary_dim;
  for (int e = 0; e < episodes; ++e) {
    Vector obs = env.reset();
    double prot_return = 0.0;
    double adv_return = 0.0;
    bool done = false;
    while (!done) {
      Vector a_p(p_dim), a_a(a_dim);
      if (total_steps < warmup_steps) {
        for (int i = 0; i < p_dim; ++i) a_p(i) = rng.uniform(-1.0, 1.0);
        for (int i = 0; i < a_dim; ++i) a_a(i) = rng.uniform(-1.0, 1.0);
      } else {
        a_p = protagonist.policy().act(obs, false, rng);
        a_a = adversary.policy().act(obs, false, rng);
      }
      Env::StepResult sr = env.step(a_p, a_a);
      buffer.push(Transition{obs, a_p, a_a, sr.reward, sr.obs, sr.done});
      prot_return += sr.reward;
      adv_return += -sr.reward;
      obs = sr.obs;
      done = sr.done;
      ++stats.steps;
      ++total_steps;
    }
    if (contract_checks && prot_return + adv_return != 0.0)
      throw std::logic_error("zero-sum accounting violated: episode returns do not cancel");
    stats.mean_return += learner_is_adversary ? adv_return : prot_return;
  }
  stats.mean_return /= episodes;
  return stats;
}

struct UpdateStats {
  double critic_loss = 0.0, actor_loss = 0.0, alpha_loss = 0.0;
  int updates = 0;
};

void dump_diagnostic(const SacAgent& agent, const std::string& dir, const char* role,
                     int iteration) {
  if (dir.empty()) return;
  std::ofstream out(dir + "/diagnostic_" + role + "_iter" + std::to_string(iteration) +
                    ".ckpt");
  if (out) agent.save(out);
}

UpdateStats run_updates(SacAgent& agent, ReplayBuffer& buffer, double role_sign, int n,
                        int count, std::size_t batch_size, Rng& rng,
                        const std::string& diagnostics_dir, const char* role) {
  UpdateStats stats;
  for (int i = 0; i < count; ++i) {
    const std::vector<Transition> batch = buffer.sample(batch_size, rng);
    const SacAgent::CriticUpdateResult cu = agent.critic_update(batch, role_sign, n, rng);
    double critic_loss = 0.0;
    for (double l : cu.losses) critic_loss += l;
    critic_loss /= static_cast<double>(cu.losses.size());
    const double actor_loss = agent.actor_update(batch, n, rng);
    const double alpha_loss = agent.temperature_update(batch, rng);
    if (!std::isfinite(critic_loss) || !std::isfinite(actor_loss) ||
        !std::isfinite(alpha_loss)) {
      dump_diagnostic(agent, diagnostics_dir, role, n);
      throw std::runtime_error(std::string("non-finite ") + role + " loss at iteration " +
                               std::to_string(n) +
                               (diagnostics_dir.empty()
                                    ? ""
                                    : "; diagnostic checkpoint written to " + diagnostics_dir));
    }
    stats.critic_loss += critic_loss;
    stats.actor_loss += actor_loss;
    stats.alpha_loss += alpha_loss;
    ++stats.updates;
  }
  if (stats.updates > 0) {
    stats.critic_loss /= stats.updates;
    stats.actor_loss /= stats.updates;
    stats.alpha_loss /= stats.updates;
  }
  return stats;
}

// Deterministic-policy adapter over a const agent.
class FrozenPolicy : public Actor {
 public:
  FrozenPolicy(const GaussianPolicy& policy, bool deterministic)
      : policy_(policy), deterministic_(deterministic) {}
  Vector act(const Vector& obs, bool deterministic, Rng& rng) override {
    return policy_.act(obs, deterministic_ || deterministic, rng);
  }

 private:
  const GaussianPolicy& policy_;
  bool deterministic_;
};

}  // namespace

void TrainSetup::validate() const {
  if (iterations < 1) throw std::invalid_argument("iterations must be >= 1");
  if (episodes_per_phase < 1) throw std::invalid_argument("episodes_per_phase must be >= 1");
  if (eval_interval < 1) throw std::invalid_argument("eval_interval must be >= 1");
  if (eval_rollouts < 1) throw std::invalid_argument("eval_rollouts must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(updates_per_step >= 0.0))
    throw std::invalid_argument("updates_per_step must be >= 0");
  if (mass_grid.empty() || friction_grid.empty())
    throw std::invalid_argument("sweep grids must be non-empty");
  if (!contains_nominal(mass_grid) || !contains_nominal(friction_grid))
    throw std::invalid_argument("sweep grids must contain the nominal scale 1.0");
  for (double v : mass_grid)
    if (!(v > 0.0)) throw std::invalid_argument("mass scales must be positive");
  for (double v : friction_grid)
    if (!(v >= 0.0)) throw std::invalid_argument("friction scales must be non-negative");
}

TrainResult train(const TrainSetup& setup, std::uint64_t seed) {
  setup.validate();
  const std::unique_ptr<Env> env = make_env(setup.env_name, setup.f_max, setup.horizon);
  const std::unique_ptr<Env> eval_env = make_env(setup.env_name, setup.f_max, setup.horizon);
  const GameSpec& spec = env->spec();

  AgentConfig cfg = setup.agent;
  cfg.obs_dim = spec.obs_dim;
  cfg.schedule.total_iterations = setup.iterations;

  Rng master(seed);
  Rng rng_prot = master.split(1);
  Rng rng_adv = master.split(2);
  Rng rng_collect = master.split(3);
  Rng rng_update_prot = master.split(4);
  Rng rng_update_adv = master.split(5);

  AgentConfig cfg_p = cfg;
  cfg_p.action_dim = spec.protagonist_dim;
  AgentConfig cfg_a = cfg;
  cfg_a.action_dim = spec.adversary_dim;

  TrainResult result{make_variant(setup.variant, cfg_p, rng_prot),
                     make_variant(setup.variant, cfg_a, rng_adv),
                     {},
                     {}};
  SacAgent& protagonist = result.protagonist;
  SacAgent& adversary = result.adversary;

  ReplayBuffer buffer(setup.replay_capacity, setup.replay_min_fill);
  std::size_t total_steps = 0;
  double update_budget_prot = 0.0;
  double update_budget_adv = 0.0;
  const auto t0 = std::chrono::steady_clock::now();

  for (int n = 1; n <= setup.iterations; ++n) {
    RunRecord rec;
    rec.iteration = n;
    rec.beta = beta(protagonist.config().schedule, n);

    // Adversary phase: the protagonist must come out bit-identical.
    const std::string frozen_prot =
        setup.contract_checks ? protagonist.fingerprint() : std::string();
    const PhaseStats adv_collect =
        collect_episodes(*env, protagonist, adversary, true, buffer, setup.episodes_per_phase,
                         setup.warmup_steps, total_steps, rng_collect, setup.contract_checks);
    rec.adversary_return = adv_collect.mean_return;
    if (buffer.ready() && total_steps >= setup.warmup_steps) {
      update_budget_adv += static_cast<double>(adv_collect.steps) * setup.updates_per_step;
      const int count = static_cast<int>(update_budget_adv);
      update_budget_adv -= count;
      const UpdateStats us = run_updates(adversary, buffer, -1.0, n, count, setup.batch_size,
                                         rng_update_adv, setup.diagnostics_dir, "adversary");
      rec.critic_loss_adv = us.critic_loss;
      rec.actor_loss_adv = us.actor_loss;
      rec.alpha_loss_adv = us.alpha_loss;
      rec.updates_adv = us.updates;
    }
    rec.alpha_adv = adversary.alpha();
    if (setup.contract_checks && protagonist.fingerprint() != frozen_prot)
      throw std::logic_error("freeze contract violated: protagonist changed during the "
                             "adversary phase");

    // Protagonist phase: the adversary must come out bit-identical.
    const std::string frozen_adv =
        setup.contract_checks ? adversary.fingerprint() : std::string();
    const PhaseStats prot_collect =
        collect_episodes(*env, protagonist, adversary, false, buffer, setup.episodes_per_phase,
                         setup.warmup_steps, total_steps, rng_collect, setup.contract_checks);
    rec.protagonist_return = prot_collect.mean_return;
    if (buffer.ready() && total_steps >= setup.warmup_steps) {
      update_budget_prot += static_cast<double>(prot_collect.steps) * setup.updates_per_step;
      const int count = static_cast<int>(update_budget_prot);
      update_budget_prot -= count;
      const UpdateStats us = run_updates(protagonist, buffer, 1.0, n, count, setup.batch_size,
                                         rng_update_prot, setup.diagnostics_dir, "protagonist");
      rec.critic_loss_prot = us.critic_loss;
      rec.actor_loss_prot = us.actor_loss;
      rec.alpha_loss_prot = us.alpha_loss;
      rec.updates_prot = us.updates;
    }
    rec.alpha_prot = protagonist.alpha();
    if (setup.contract_checks && adversary.fingerprint() != frozen_adv)
      throw std::logic_error("freeze contract violated: adversary changed during the "
                             "protagonist phase");

    if (n % setup.eval_interval == 0) {
      FrozenPolicy eval_policy(protagonist.policy(), true);
      rec.robustness = robustness_eval(*eval_env, eval_policy, setup.mass_grid,
                                       setup.friction_grid, setup.eval_rollouts);
      rec.has_robustness = true;
      result.robustness_series.emplace_back(n, rec.robustness);
    }
    rec.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.records.push_back(std::move(rec));
  }
  return result;
}

double grid_mean(const std::vector<double>& mass_grid, const std::vector<double>& friction_grid,
                 const std::function<double(double, double)>& cell_return) {
  if (mass_grid.empty() || friction_grid.empty())
    throw std::invalid_argument("sweep grids must be non-empty");
  double sum = 0.0;
  for (double m : mass_grid)
    for (double f : friction_grid) sum += cell_return(m, f);
  return sum / (static_cast<double>(mass_grid.size()) * static_cast<double>(friction_grid.size()));
}

double robustness_eval(Env& env, Actor& protagonist, const std::vector<double>& mass_grid,
                       const std::vector<double>& friction_grid, int episodes_per_cell) {
  if (episodes_per_cell < 1) throw std::invalid_argument("episodes_per_cell must be >= 1");
  const double score =
      grid_mean(mass_grid, friction_grid, [&](double mass_scale, double friction_scale) {
        env.set_params(mass_scale, friction_scale);
        double sum = 0.0;
        for (int e = 0; e < episodes_per_cell; ++e)
          sum += rollout(env, protagonist, nullptr, true, 0).protagonist_return;
        return sum / episodes_per_cell;
      });
  env.set_params(1.0, 1.0);
  return score;
}

double stability_metric(const std::vector<double>& robustness_series) {
  if (robustness_series.size() < 2)
    throw std::invalid_argument("stability needs at least two scores");
  double sum = 0.0;
  int pairs = 0;
  int skipped = 0;
  for (std::size_t i = 0; i + 1 < robustness_series.size(); ++i) {
    const double v = robustness_series[i];
    if (v == 0.0) {
      ++skipped;
      continue;
    }
    sum += std::max(0.0, (v - robustness_series[i + 1]) / std::abs(v)) * 100.0;
    ++pairs;
  }
  if (skipped > 0)
    std::cerr << "stability: skipped " << skipped << " pair(s) with a zero base score\n";
  return pairs > 0 ? sum / pairs : 0.0;
}

double final_adversarial_eval(const SacAgent& protagonist, const TrainSetup& setup,
                              int adversary_iterations, std::uint64_t seed, int eval_episodes) {
  if (adversary_iterations < 0)
    throw std::invalid_argument("adversary_iterations must be >= 0");
  if (eval_episodes < 1) throw std::invalid_argument("eval_episodes must be >= 1");
  setup.validate();
  const std::unique_ptr<Env> env = make_env(setup.env_name, setup.f_max, setup.horizon);
  const GameSpec& spec = env->spec();

  AgentConfig cfg = setup.agent;
  cfg.obs_dim = spec.obs_dim;
  cfg.action_dim = spec.adversary_dim;
  cfg.schedule.total_iterations = std::max(adversary_iterations, 1);

  Rng master(seed);
  Rng rng_agent = master.split(1);
  Rng rng_collect = master.split(2);
  Rng rng_update = master.split(3);
  SacAgent adversary = make_variant(setup.variant, cfg, rng_agent);

  ReplayBuffer buffer(setup.replay_capacity, setup.replay_min_fill);
  std::size_t total_steps = 0;
  double update_budget = 0.0;
  const std::string frozen =
      setup.contract_checks ? protagonist.fingerprint() : std::string();

  // The frozen protagonist plays its deterministic policy; only the fresh
  // adversary explores and learns.
  FrozenPolicy frozen_prot(protagonist.policy(), true);
  const int a_dim = spec.adversary_dim;
  for (int n = 1; n <= adversary_iterations; ++n) {
    std::size_t phase_steps = 0;
    for (int e = 0; e < setup.episodes_per_phase; ++e) {
      Vector obs = env->reset();
      bool done = false;
      while (!done) {
        Vector a_p = frozen_prot.act(obs, true, rng_collect);
        Vector a_a(a_dim);
        if (total_steps < setup.warmup_steps)
          for (int i = 0; i < a_dim; ++i) a_a(i) = rng_collect.uniform(-1.0, 1.0);
        else
          a_a = adversary.policy().act(obs, false, rng_collect);
        Env::StepResult sr = env->step(a_p, a_a);
        buffer.push(Transition{obs, a_p, a_a, sr.reward, sr.obs, sr.done});
        obs = sr.obs;
        done = sr.done;
        ++phase_steps;
        ++total_steps;
      }
    }
    if (buffer.ready() && total_steps >= setup.warmup_steps) {
      update_budget += static_cast<double>(phase_steps) * setup.updates_per_step;
      const int count = static_cast<int>(update_budget);
      update_budget -= count;
      run_updates(adversary, buffer, -1.0, n, count, setup.batch_size, rng_update,
                  setup.diagnostics_dir, "final_adversary");
    }
  }
  if (setup.contract_checks && protagonist.fingerprint() != frozen)
    throw std::logic_error("freeze contract violated: protagonist changed during the final "
                           "adversarial evaluation");

  FrozenPolicy frozen_adv(adversary.policy(), true);
  double sum = 0.0;
  for (int e = 0; e < eval_episodes; ++e)
    sum += rollout(*env, frozen_prot, &frozen_adv, true, 0).protagonist_return;
  return sum / eval_episodes;
}

double c4_correction(int k) {
  if (k < 2) throw std::invalid_argument("c4 needs k >= 2");
  return std::sqrt(2.0 / (k - 1)) * std::tgamma(k / 2.0) / std::tgamma((k - 1) / 2.0);
}

TheoremReport validate_theorem1(const OracleSpec& oracle, std::uint64_t seed) {
  if (oracle.trials < 1000)
    throw std::invalid_argument("theorem validation needs at least 1000 trials");
  if (oracle.schedule.mode != AggregationMode::kTduExponential)
    throw std::invalid_argument("theorem validation applies to the exponential schedule");
  if (oracle.k < 2) throw std::invalid_argument("theorem validation needs k >= 2");
  if (!(oracle.sigma >= 0.0)) throw std::invalid_argument("sigma must be >= 0");
  TduSchedule schedule = oracle.schedule;
  schedule.validate();
  const int n_end = schedule.total_iterations;

  TheoremReport report;
  report.beta_end = beta(schedule, n_end);
  report.folded_limit = oracle.sigma * std::sqrt(2.0 / (M_PI * oracle.k));
  report.expected_signed_bias = report.beta_end * c4_correction(oracle.k) * oracle.sigma;

  Rng rng(seed);
  std::vector<double> qs(oracle.k);
  double sum_abs_err = 0.0, sum_abs_err2 = 0.0;
  double sum_abs_mu = 0.0, sum_abs_mu2 = 0.0;
  double sum_signed = 0.0, sum_signed2 = 0.0;
  double sum_sigma_q = 0.0;
  bool pointwise_ok = true;
  for (int t = 0; t < oracle.trials; ++t) {
    for (int i = 0; i < oracle.k; ++i) qs[i] = rng.normal(oracle.q_star, oracle.sigma);
    const AggregateResult agg = aggregate(qs, schedule, n_end);
    const double err = std::abs(agg.value - oracle.q_star);
    const double mu_dev = std::abs(agg.mean - oracle.q_star);
    const double signed_err = agg.value - oracle.q_star;
    sum_abs_err += err;
    sum_abs_err2 += err * err;
    sum_abs_mu += mu_dev;
    sum_abs_mu2 += mu_dev * mu_dev;
    sum_signed += signed_err;
    sum_signed2 += signed_err * signed_err;
    sum_sigma_q += agg.stddev;
    // |mu + beta sigma_Q - q*| <= |mu - q*| + beta sigma_Q, up to rounding.
    if (err > mu_dev + report.beta_end * agg.stddev + 1e-9 * (1.0 + err)) pointwise_ok = false;
  }
  const double inv_n = 1.0 / oracle.trials;
  report.mean_abs_error = sum_abs_err * inv_n;
  report.mean_abs_mu_dev = sum_abs_mu * inv_n;
  report.signed_bias = sum_signed * inv_n;
  report.mean_sigma_q = sum_sigma_q * inv_n;
  const auto stderr_of = [&](double sum2, double mean) {
    const double var = std::max(0.0, sum2 * inv_n - mean * mean);
    return std::sqrt(var * inv_n);
  };
  report.mean_abs_error_se = stderr_of(sum_abs_err2, report.mean_abs_error);
  report.mean_abs_mu_dev_se = stderr_of(sum_abs_mu2, report.mean_abs_mu_dev);
  report.signed_bias_se = stderr_of(sum_signed2, report.signed_bias);
  report.triangle_bound = report.mean_abs_mu_dev + report.beta_end * report.mean_sigma_q;
  report.bound_holds =
      pointwise_ok &&
      report.mean_abs_error <= report.triangle_bound + 1e-9 * (1.0 + report.triangle_bound);
  return report;
}

void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn) {
  if (count == 0) return;
  const std::size_t n_workers =
      std::min<std::size_t>(std::max(workers, 1), count);
  if (n_workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(n_workers);
  for (std::size_t w = 0; w < n_workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

int default_worker_count(std::size_t jobs) {
  if (jobs <= 1) return 1;
  long configured = 0;
  if (const char* env = std::getenv("UACER_WORKERS")) {
    char* end = nullptr;
    configured = std::strtol(env, &end, 10);
    if (end == env || configured < 1) configured = 0;
  }
  std::size_t workers = configured > 0 ? static_cast<std::size_t>(configured)
                                       : std::max(1u, std::thread::hardware_concurrency());
  return static_cast<int>(std::min(workers, jobs));
}

}  // namespace uacer
