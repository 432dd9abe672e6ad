#include "uacer/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "uacer/config.hpp"
#include "uacer/export.hpp"
#include "uacer/game.hpp"
#include "uacer/harness.hpp"
#include "uacer/sac.hpp"

namespace uacer {

namespace {

namespace fs = std::filesystem;

SacAgent load_agent(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read checkpoint '" + path + "'");
  return SacAgent::load(in);
}

void save_agent(const std::string& path, const SacAgent& agent) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  agent.save(out);
}

// Deterministic mean return for every (mass, friction) cell; the grand mean
// of the result accumulates in the same order as robustness_eval.
std::vector<std::vector<double>> grid_cell_matrix(Env& env, Actor& actor,
                                                  const std::vector<double>& mass_grid,
                                                  const std::vector<double>& friction_grid,
                                                  int episodes_per_cell) {
  std::vector<std::vector<double>> cells;
  cells.reserve(mass_grid.size());
  for (double m : mass_grid) {
    std::vector<double> row;
    row.reserve(friction_grid.size());
    for (double f : friction_grid) {
      env.set_params(m, f);
      double sum = 0.0;
      for (int e = 0; e < episodes_per_cell; ++e)
        sum += rollout(env, actor, nullptr, true, 0).protagonist_return;
      row.push_back(sum / episodes_per_cell);
    }
    cells.push_back(std::move(row));
  }
  env.set_params(1.0, 1.0);
  return cells;
}

double matrix_grand_mean(const std::vector<std::vector<double>>& cells) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& row : cells)
    for (double v : row) {
      sum += v;
      ++count;
    }
  return sum / static_cast<double>(count);
}

double mean_of(const std::vector<double>& values) {
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

std::string robustness_chart(const std::vector<std::vector<std::pair<int, double>>>& series) {
  std::vector<double> xs, means, halves;
  if (!series.empty()) {
    const std::size_t points = series.front().size();
    for (const auto& s : series)
      if (s.size() != points)
        throw std::runtime_error("robustness series disagree across seeds");
    for (std::size_t p = 0; p < points; ++p) {
      std::vector<double> values;
      values.reserve(series.size());
      for (const auto& s : series) values.push_back(s[p].second);
      xs.push_back(series.front()[p].first);
      means.push_back(mean_of(values));
      halves.push_back(band_halfwidth(values));
    }
  }
  return line_chart_svg("robustness vs iteration", "iteration", "robustness", xs, means,
                        halves);
}

std::string seed_dir(const std::string& out_dir, std::uint64_t seed) {
  return out_dir + "/seed_" + std::to_string(seed);
}

double seed_stability(const std::vector<std::pair<int, double>>& series) {
  if (series.size() < 2) return 0.0;
  std::vector<double> values;
  values.reserve(series.size());
  for (const auto& [iter, score] : series) values.push_back(score);
  return stability_metric(values);
}

struct SeedOutcome {
  SeedSummary summary;
  std::vector<std::pair<int, double>> robustness_series;
  std::vector<std::vector<double>> cell_returns;
};

SeedOutcome run_seed(const RunConfig& config, std::uint64_t seed, bool worst_case) {
  const TrainSetup setup = config.to_train_setup();
  const TrainResult result = train(setup, seed);
  const std::string dir = seed_dir(config.out_dir, seed);
  fs::create_directories(dir);
  write_metrics_csv(dir + "/metrics.csv", result.records);
  save_agent(dir + "/protagonist.ckpt", result.protagonist);
  save_agent(dir + "/adversary.ckpt", result.adversary);

  SeedOutcome outcome;
  outcome.robustness_series = result.robustness_series;
  const std::unique_ptr<Env> env = make_env(config.env, config.f_max, config.horizon);
  SacAgent protagonist = result.protagonist;
  outcome.cell_returns = grid_cell_matrix(*env, protagonist, config.mass_grid,
                                          config.friction_grid, config.eval_rollouts);
  outcome.summary.seed = seed;
  outcome.summary.final_robustness = matrix_grand_mean(outcome.cell_returns);
  outcome.summary.stability_pct = seed_stability(result.robustness_series);
  outcome.summary.worst_case_return =
      worst_case ? final_adversarial_eval(result.protagonist, setup,
                                          config.adversary_eval_iterations,
                                          seed ^ 0x5afe5eedULL)
                 : outcome.summary.final_robustness;
  return outcome;
}

void check_unique_seeds(const std::vector<std::uint64_t>& seeds) {
  const std::set<std::uint64_t> unique(seeds.begin(), seeds.end());
  if (unique.size() != seeds.size())
    throw ConfigError("seeds must be unique (they name output directories)");
}

int run_train(const RunConfig& config) {
  check_unique_seeds(config.seeds);
  fs::create_directories(config.out_dir);
  const std::string echo = resolved_echo(config);
  std::cout << echo;
  write_text_file(config.out_dir + "/config_resolved.txt", echo);

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<SeedOutcome> outcomes(config.seeds.size());
  parallel_for(config.seeds.size(), default_worker_count(config.seeds.size()),
               [&](std::size_t i) { outcomes[i] = run_seed(config, config.seeds[i], true); });

  RunSummary summary;
  summary.config_echo = echo;
  std::string id_payload = echo;
  std::vector<double> finals, stabilities, worsts;
  std::vector<std::vector<std::pair<int, double>>> series;
  summary.cell_returns.assign(config.mass_grid.size(),
                              std::vector<double>(config.friction_grid.size(), 0.0));
  for (const SeedOutcome& o : outcomes) {
    summary.seeds.push_back(o.summary);
    finals.push_back(o.summary.final_robustness);
    stabilities.push_back(o.summary.stability_pct);
    worsts.push_back(o.summary.worst_case_return);
    series.push_back(o.robustness_series);
    id_payload += " " + std::to_string(o.summary.seed);
    for (std::size_t r = 0; r < summary.cell_returns.size(); ++r)
      for (std::size_t c = 0; c < summary.cell_returns[r].size(); ++c)
        summary.cell_returns[r][c] += o.cell_returns[r][c] / config.seeds.size();
  }
  summary.run_id = run_id(id_payload);
  summary.final_robustness = mean_of(finals);
  summary.stability_pct = mean_of(stabilities);
  summary.worst_case_return = mean_of(worsts);
  summary.mass_grid = config.mass_grid;
  summary.friction_grid = config.friction_grid;
  summary.wall_clock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_summary_json(config.out_dir + "/summary.json", summary);
  write_text_file(config.out_dir + "/robustness.svg", robustness_chart(series));
  write_text_file(config.out_dir + "/heatmap.svg",
                  heatmap_svg("final return by environment scale", "mass scale",
                              "friction scale", summary.mass_grid, summary.friction_grid,
                              summary.cell_returns));

  for (const SeedSummary& s : summary.seeds)
    std::cout << "seed " << s.seed << ": final_robustness=" << format_double(s.final_robustness)
              << " stability_pct=" << format_double(s.stability_pct)
              << " worst_case_return=" << format_double(s.worst_case_return) << "\n";
  std::cout << "run_id = " << summary.run_id << "\n"
            << "final_robustness = " << format_double(summary.final_robustness) << "\n"
            << "stability_pct = " << format_double(summary.stability_pct) << "\n"
            << "worst_case_return = " << format_double(summary.worst_case_return) << "\n"
            << "outputs in " << config.out_dir << "\n";
  return 0;
}

int run_eval_robustness(const RunConfig& config, const std::string& ckpt,
                        const std::string& out_dir) {
  SacAgent agent = load_agent(ckpt);
  const std::unique_ptr<Env> env = make_env(config.env, config.f_max, config.horizon);
  std::cout << "mass_scale,friction_scale,episode,return\n";
  std::vector<std::vector<double>> cells;
  for (double m : config.mass_grid) {
    std::vector<double> row;
    for (double f : config.friction_grid) {
      env->set_params(m, f);
      double sum = 0.0;
      for (int e = 0; e < config.eval_rollouts; ++e) {
        const double ret = rollout(*env, agent, nullptr, true, 0).protagonist_return;
        sum += ret;
        std::cout << format_double(m) << "," << format_double(f) << "," << e << ","
                  << format_double(ret) << "\n";
      }
      row.push_back(sum / config.eval_rollouts);
    }
    cells.push_back(std::move(row));
  }
  const double score = matrix_grand_mean(cells);
  std::cout << "robustness = " << format_double(score) << "\n";
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text_file(out_dir + "/heatmap.svg",
                    heatmap_svg("return by environment scale", "mass scale", "friction scale",
                                config.mass_grid, config.friction_grid, cells));
  }
  return 0;
}

int run_eval_worstcase(const RunConfig& config, const std::string& ckpt, int iterations,
                       std::uint64_t seed) {
  const SacAgent agent = load_agent(ckpt);
  const double worst =
      final_adversarial_eval(agent, config.to_train_setup(), iterations, seed);
  std::cout << "worst_case_return = " << format_double(worst) << "\n";
  return 0;
}

int run_validate(const OracleSpec& oracle, std::uint64_t seed) {
  const TheoremReport report = validate_theorem1(oracle, seed);
  std::cout << "beta_end = " << format_double(report.beta_end) << "\n"
            << "mean_abs_error = " << format_double(report.mean_abs_error) << " (se "
            << format_double(report.mean_abs_error_se) << ")\n"
            << "triangle_bound = " << format_double(report.triangle_bound) << "\n"
            << "bound_holds = " << (report.bound_holds ? "true" : "false") << "\n"
            << "signed_bias = " << format_double(report.signed_bias) << " (se "
            << format_double(report.signed_bias_se) << ")\n"
            << "expected_signed_bias = " << format_double(report.expected_signed_bias) << "\n"
            << "mean_abs_mu_dev = " << format_double(report.mean_abs_mu_dev) << " (se "
            << format_double(report.mean_abs_mu_dev_se) << ")\n"
            << "folded_limit = " << format_double(report.folded_limit) << "\n";
  return report.bound_holds ? 0 : 1;
}

int run_sweep_k(RunConfig config, const std::vector<int>& ks_override) {
  check_unique_seeds(config.seeds);
  const std::vector<int> ks = ks_override.empty() ? config.k_sweep : ks_override;
  fs::create_directories(config.out_dir);

  struct Job {
    int k;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (int k : ks)
    for (std::uint64_t seed : config.seeds) jobs.push_back(Job{k, seed});
  std::vector<double> finals(jobs.size());
  parallel_for(jobs.size(), default_worker_count(jobs.size()), [&](std::size_t i) {
    RunConfig cell = config;
    cell.k = jobs[i].k;
    cell.out_dir = config.out_dir + "/k_" + std::to_string(jobs[i].k);
    const TrainSetup setup = cell.to_train_setup();
    const TrainResult result = train(setup, jobs[i].seed);
    const std::unique_ptr<Env> env = make_env(cell.env, cell.f_max, cell.horizon);
    SacAgent protagonist = result.protagonist;
    finals[i] = matrix_grand_mean(grid_cell_matrix(
        *env, protagonist, cell.mass_grid, cell.friction_grid, cell.eval_rollouts));
  });

  std::string csv = "k,seed,final_robustness\n";
  for (std::size_t i = 0; i < jobs.size(); ++i)
    csv += std::to_string(jobs[i].k) + "," + std::to_string(jobs[i].seed) + "," +
           format_double(finals[i]) + "\n";
  write_text_file(config.out_dir + "/k_sweep.csv", csv);

  std::vector<std::string> labels;
  std::vector<double> means;
  for (int k : ks) {
    std::vector<double> values;
    for (std::size_t i = 0; i < jobs.size(); ++i)
      if (jobs[i].k == k) values.push_back(finals[i]);
    labels.push_back("K=" + std::to_string(k));
    means.push_back(mean_of(values));
    std::cout << "K=" << k << " final_robustness=" << format_double(means.back()) << "\n";
  }
  write_text_file(config.out_dir + "/k_sweep.svg",
                  bar_chart_svg("final robustness by ensemble size", "ensemble size",
                                "final robustness", labels, means));
  std::cout << "outputs in " << config.out_dir << "\n";
  return 0;
}

int run_plot(const std::string& out_dir) {
  if (!fs::is_directory(out_dir)) throw ConfigError("run directory '" + out_dir + "' not found");
  std::vector<fs::path> seed_dirs;
  for (const auto& entry : fs::directory_iterator(out_dir))
    if (entry.is_directory() && entry.path().filename().string().rfind("seed_", 0) == 0)
      seed_dirs.push_back(entry.path());
  std::sort(seed_dirs.begin(), seed_dirs.end());

  std::vector<std::vector<std::pair<int, double>>> series;
  for (const fs::path& dir : seed_dirs) {
    const fs::path csv = dir / "metrics.csv";
    if (!fs::exists(csv)) continue;
    std::vector<std::pair<int, double>> s;
    for (const RunRecord& rec : read_metrics_csv(csv.string()))
      if (rec.has_robustness) s.emplace_back(rec.iteration, rec.robustness);
    series.push_back(std::move(s));
  }
  int emitted = 0;
  if (!series.empty()) {
    write_text_file(out_dir + "/robustness.svg", robustness_chart(series));
    ++emitted;
  }
  const std::string summary_path = out_dir + "/summary.json";
  if (fs::exists(summary_path)) {
    const RunSummary summary = read_summary_json(summary_path);
    write_text_file(out_dir + "/heatmap.svg",
                    heatmap_svg("final return by environment scale", "mass scale",
                                "friction scale", summary.mass_grid, summary.friction_grid,
                                summary.cell_returns));
    ++emitted;
  }
  const std::string sweep_path = out_dir + "/k_sweep.csv";
  if (fs::exists(sweep_path)) {
    std::stringstream in(read_text_file(sweep_path));
    std::string line;
    std::getline(in, line);  // header
    std::vector<int> ks;
    std::vector<std::vector<double>> values;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::stringstream row(line);
      std::string k_str, seed_str, value_str;
      std::getline(row, k_str, ',');
      std::getline(row, seed_str, ',');
      std::getline(row, value_str, ',');
      const int k = std::stoi(k_str);
      auto it = std::find(ks.begin(), ks.end(), k);
      if (it == ks.end()) {
        ks.push_back(k);
        values.emplace_back();
        it = ks.end() - 1;
      }
      values[static_cast<std::size_t>(it - ks.begin())].push_back(std::stod(value_str));
    }
    std::vector<std::string> labels;
    std::vector<double> means;
    for (std::size_t i = 0; i < ks.size(); ++i) {
      labels.push_back("K=" + std::to_string(ks[i]));
      means.push_back(mean_of(values[i]));
    }
    write_text_file(out_dir + "/k_sweep.svg",
                    bar_chart_svg("final robustness by ensemble size", "ensemble size",
                                  "final robustness", labels, means));
    ++emitted;
  }
  if (emitted == 0) throw ConfigError("nothing to plot in '" + out_dir + "'");
  std::cout << "wrote " << emitted << " chart set(s) to " << out_dir << "\n";
  return 0;
}

struct CommonFlags {
  std::string config_path, out, variant, env, ckpt;
  std::vector<std::uint64_t> seeds;
  int k = 0;

  RunConfig resolve() const {
    RunConfig config = config_path.empty() ? RunConfig{} : load_config(config_path);
    if (!seeds.empty()) config.seeds = seeds;
    if (!out.empty()) config.out_dir = out;
    if (!variant.empty()) {
      variant_mode(variant);  // validates the name
      config.variant = variant;
    }
    if (!env.empty()) {
      if (env != "point_mass" && env != "pendulum")
        throw ConfigError("unknown environment '" + env + "'");
      config.env = env;
    }
    if (k != 0) {
      if (k < 2) throw ConfigError("--k must be >= 2");
      config.k = k;
    }
    return config;
  }
};

void add_common_flags(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "config file (key = value lines)");
  cmd->add_option("--seed", flags.seeds, "seeds to run (overrides the config list)");
  cmd->add_option("--out", flags.out, "output directory");
  cmd->add_option("--variant", flags.variant, "agent variant");
  cmd->add_option("--env", flags.env, "environment name");
  cmd->add_option("--k", flags.k, "ensemble size");
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"robust adversarial RL with ensemble critics"};
  app.require_subcommand(1);

  CommonFlags train_flags;
  CLI::App* cmd_train = app.add_subcommand("train", "alternating adversarial training");
  add_common_flags(cmd_train, train_flags);

  CommonFlags evalr_flags;
  CLI::App* cmd_evalr =
      app.add_subcommand("eval-robustness", "sweep-grid evaluation of a checkpoint");
  add_common_flags(cmd_evalr, evalr_flags);
  cmd_evalr->add_option("--ckpt", evalr_flags.ckpt, "protagonist checkpoint")->required();

  CommonFlags evalw_flags;
  int evalw_iterations = -1;
  std::uint64_t evalw_seed = 0;
  CLI::App* cmd_evalw =
      app.add_subcommand("eval-worstcase", "train a fresh adversary against a checkpoint");
  add_common_flags(cmd_evalw, evalw_flags);
  cmd_evalw->add_option("--ckpt", evalw_flags.ckpt, "protagonist checkpoint")->required();
  cmd_evalw->add_option("--iterations", evalw_iterations, "adversary training iterations");
  cmd_evalw->add_option("--eval-seed", evalw_seed, "seed for the adversary run");

  OracleSpec oracle;
  std::uint64_t validate_seed = 20240614;
  CLI::App* cmd_validate =
      app.add_subcommand("validate-theorem1", "Monte-Carlo check of the aggregate bias bound");
  cmd_validate->add_option("--sigma", oracle.sigma, "critic noise scale");
  cmd_validate->add_option("--q-star", oracle.q_star, "true value");
  cmd_validate->add_option("--k", oracle.k, "ensemble size");
  cmd_validate->add_option("--trials", oracle.trials, "Monte-Carlo trials");
  cmd_validate->add_option("--beta0", oracle.schedule.beta0, "initial optimism weight");
  cmd_validate->add_option("--beta-min", oracle.schedule.beta_min, "asymptotic weight");
  cmd_validate->add_option("--lambda", oracle.schedule.lambda, "decay rate");
  cmd_validate->add_option("--n", oracle.schedule.total_iterations, "schedule length");
  cmd_validate->add_option("--run-seed", validate_seed, "Monte-Carlo seed");

  CommonFlags sweep_flags;
  std::vector<int> sweep_ks;
  CLI::App* cmd_sweep = app.add_subcommand("sweep-k", "train across ensemble sizes");
  add_common_flags(cmd_sweep, sweep_flags);
  cmd_sweep->add_option("--ks", sweep_ks, "ensemble sizes to sweep");

  std::string plot_dir;
  CLI::App* cmd_plot = app.add_subcommand("plot", "regenerate charts for a finished run");
  cmd_plot->add_option("--out", plot_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << "\n";
    return 2;
  }

  try {
    if (*cmd_train) return run_train(train_flags.resolve());
    if (*cmd_evalr) {
      const RunConfig config = evalr_flags.resolve();
      return run_eval_robustness(config, evalr_flags.ckpt, evalr_flags.out);
    }
    if (*cmd_evalw) {
      const RunConfig config = evalw_flags.resolve();
      const int iterations =
          evalw_iterations >= 0 ? evalw_iterations : config.adversary_eval_iterations;
      return run_eval_worstcase(config, evalw_flags.ckpt, iterations, evalw_seed);
    }
    if (*cmd_validate) return run_validate(oracle, validate_seed);
    if (*cmd_sweep) return run_sweep_k(sweep_flags.resolve(), sweep_ks);
    if (*cmd_plot) return run_plot(plot_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::cerr << app.help() << "\n";
  return 2;
}

}  // namespace uacer
