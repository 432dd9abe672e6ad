#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "uacer/game.hpp"
#include "uacer/nn.hpp"
#include "uacer/rng.hpp"
#include "uacer/tdu.hpp"

namespace uacer {

// One joint game step, shared by both agents; each reads its own action and
// reward sign out of it.
struct Transition {
  Vector s;
  Vector a_p;
  Vector a_a;
  double r = 0.0;
  Vector s_next;
  bool done = false;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 1'000'000, std::size_t min_fill = 3'000);

  void push(Transition t);
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t min_fill() const { return min_fill_; }
  bool ready() const { return data_.size() >= min_fill_; }

  // Uniform without replacement within the batch. Requires ready() and
  // batch <= size().
  std::vector<Transition> sample(std::size_t batch, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t min_fill_;
  std::size_t next_ = 0;
  std::vector<Transition> data_;
};

// tanh-squashed Gaussian policy. The trunk emits [mean, log-std] per action
// dimension; log-std is clamped to [-20, 2] and the pre-squash value to
// [-18, 18], which keeps tanh strictly inside (-1, 1) in double precision.
class GaussianPolicy {
 public:
  static constexpr double kLogStdMin = -20.0;
  static constexpr double kLogStdMax = 2.0;
  static constexpr double kPreSquashLimit = 18.0;

  GaussianPolicy(int obs_dim, int action_dim, const std::vector<int>& hidden, Rng& rng);
  GaussianPolicy(Mlp trunk, int action_dim);  // checkpoint path

  int obs_dim() const { return trunk_.input_dim(); }
  int action_dim() const { return action_dim_; }
  Mlp& trunk() { return trunk_; }
  const Mlp& trunk() const { return trunk_; }

  // Thread-safe (uncached evaluation). Stochastic mode reparameterizes:
  // a = tanh(mean + exp(logstd) * eps).
  Vector act(const Vector& obs, bool deterministic, Rng& rng) const;

  // Everything the update rules need to differentiate through a sampled
  // batch. Columns are samples. *_raw hold pre-clamp values so clamp gates
  // can zero the corresponding gradient paths.
  struct BatchSample {
    Matrix mean, logstd_raw, logstd;  // action_dim x B
    Matrix eps, u_raw, u, action;
    std::vector<double> log_prob;  // per column
  };
  // Draw order: column-major, one normal per action dim per sample, so a
  // cloned Rng replays the exact stream.
  BatchSample sample_batch(const Matrix& obs, Rng& rng) const;

  // Density of a given (strictly interior) action; quadrature/test path.
  double log_prob(const Vector& obs, const Vector& action) const;

 private:
  int action_dim_;
  Mlp trunk_;
};

// K online Q-nets plus their Polyak targets over concat(state, action).
// Diversity assigns hidden activations from {relu, leaky_relu, elu} at random
// (guaranteeing at least two distinct tags for K >= 2) and injects
// N(0, 0.01^2) parameter noise on top of the base init.
class EnsembleCritic {
 public:
  EnsembleCritic(int input_dim, const std::vector<int>& hidden, int k, bool diversity,
                 double lr, Rng& rng);

  int size() const { return static_cast<int>(online_.size()); }
  int input_dim() const { return online_.front().input_dim(); }
  Mlp& online(int k) { return online_[k]; }
  const Mlp& online(int k) const { return online_[k]; }
  Mlp& target(int k) { return target_[k]; }
  const Mlp& target(int k) const { return target_[k]; }
  AdamState& adam(int k) { return adam_[k]; }
  Activation tag(int k) const { return tags_[k]; }

  void polyak(double tau);
  // Construction invariant under diversity: some pair of critics differs in
  // activation tag or parameters.
  bool construction_diverse() const;

 private:
  friend class SacAgent;
  EnsembleCritic() = default;
  std::vector<Mlp> online_, target_;
  std::vector<AdamState> adam_;
  std::vector<Activation> tags_;
};

struct AgentConfig {
  int obs_dim = 0;
  int action_dim = 0;
  std::vector<int> hidden{256, 256, 256};
  int k = 5;
  bool diversity = true;
  TduSchedule schedule;
  double gamma = 0.99;
  double tau = 5e-3;
  int target_update_interval = 1;
  double lr_critic = 3e-4;
  double lr_actor = 1e-4;
  double lr_alpha = 3e-4;
  double initial_alpha = 5e-3;
};

// Soft actor-critic agent with a K-critic ensemble. Critic targets aggregate
// the K target nets; the actor aggregates the K online nets; both use the
// same schedule index n. Usable as protagonist (role_sign +1, reward r) or
// adversary (role_sign -1, reward -r).
class SacAgent : public Actor {
 public:
  SacAgent(AgentConfig config, Rng& rng);

  const AgentConfig& config() const { return config_; }
  GaussianPolicy& policy() { return policy_; }
  const GaussianPolicy& policy() const { return policy_; }
  EnsembleCritic& critics() { return critics_; }
  const EnsembleCritic& critics() const { return critics_; }
  double alpha() const;
  double log_alpha() const { return log_alpha_; }
  double target_entropy() const { return -static_cast<double>(config_.action_dim); }

  Vector act(const Vector& obs, bool deterministic, Rng& rng) override;

  struct CriticUpdateResult {
    std::vector<double> losses;   // per critic, pre-update
    std::vector<double> targets;  // shared y per sample
  };
  // One Adam step per critic toward the shared soft Bellman target, then a
  // Polyak update every target_update_interval calls. role_sign selects the
  // agent's action column and reward sign out of the joint transitions.
  CriticUpdateResult critic_update(const std::vector<Transition>& batch, double role_sign,
                                   int n, Rng& rng);

  // One Adam step on the policy trunk, minimizing
  // mean(alpha * log pi - Q_E) over freshly sampled actions; critic
  // parameters are left untouched.
  double actor_update(const std::vector<Transition>& batch, int n, Rng& rng);

  // One scalar Adam step on log alpha, minimizing
  // mean(-alpha * (log pi + target_entropy)).
  double temperature_update(const std::vector<Transition>& batch, Rng& rng);

  // Bitwise-comparable snapshot of every learnable parameter.
  std::string fingerprint() const;

  void save(std::ostream& out) const;
  static SacAgent load(std::istream& in);

 private:
  SacAgent() = default;

  Matrix gather_obs(const std::vector<Transition>& batch, bool next) const;
  Matrix gather_actions(const std::vector<Transition>& batch, double role_sign) const;

  AgentConfig config_;
  GaussianPolicy policy_{Mlp({1, 2}, {Activation::kIdentity}), 1};
  AdamState actor_adam_{policy_.trunk(), 1e-4};
  EnsembleCritic critics_;
  double log_alpha_ = 0.0;
  ScalarAdam alpha_adam_{3e-4};
  std::int64_t critic_updates_ = 0;
};

// Named experiment variants:
//   full           K critics, exponential-decay aggregation, diversity on
//   no_ensemble    2 critics, min aggregation, diversity off
//   no_tdu         K critics, min aggregation, diversity on
//   no_diversity   K critics, exponential-decay aggregation, diversity off
//   pessimism_dec / pessimism_inc / pessimism_min  per the aggregation modes
SacAgent make_variant(const std::string& name, AgentConfig base, Rng& rng);

// The aggregation mode a named variant trains with.
AggregationMode variant_mode(const std::string& name);

}  // namespace uacer
