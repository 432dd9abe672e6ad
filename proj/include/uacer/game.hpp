#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "uacer/nn.hpp"
#include "uacer/rng.hpp"

namespace uacer {

struct GameSpec {
  std::string name;
  int obs_dim = 0;
  int protagonist_dim = 0;
  int adversary_dim = 0;
  double f_max = 0.5;   // adversary force ceiling; applied force = f_max * a_a
  int horizon = 500;
  double gamma = 0.99;
  double mass = 1.0;
  double friction = 0.1;
  std::vector<double> mass_grid{0.5, 0.75, 1.0, 1.25, 1.5};
  std::vector<double> friction_grid{0.5, 0.75, 1.0, 1.25, 1.5};
};

// Two-player zero-sum environment. The reward is returned once per step;
// the protagonist maximizes +r, the adversary is paid -r by its caller.
// Instances are not thread-safe; use one per rollout worker.
class Env {
 public:
  virtual ~Env() = default;

  const GameSpec& spec() const { return spec_; }

  // Applies to episodes started after the call. mass_scale must be positive;
  // friction_scale zero is valid (frictionless).
  void set_params(double mass_scale, double friction_scale);
  double mass_scale() const { return mass_scale_; }
  double friction_scale() const { return friction_scale_; }

  Vector reset();

  struct StepResult {
    Vector obs;
    double reward;
    bool done;
  };
  // Actions outside [-1,1] are clamped and counted, not rejected.
  StepResult step(const Vector& a_p, const Vector& a_a);

  bool episode_active() const { return active_; }
  int steps_taken() const { return t_; }
  int clamp_warnings() const { return clamp_warnings_; }

 protected:
  explicit Env(GameSpec spec) : spec_(std::move(spec)) {}
  virtual void do_reset() = 0;
  // Receives clamped actions; returns the post-step reward.
  virtual double do_step(const Vector& a_p, const Vector& a_a) = 0;
  virtual Vector observe() const = 0;

  double effective_mass() const { return spec_.mass * mass_scale_; }
  double effective_friction() const { return spec_.friction * friction_scale_; }

  static constexpr double kDt = 0.05;

 private:
  GameSpec spec_;
  double mass_scale_ = 1.0;
  double friction_scale_ = 1.0;
  bool active_ = false;
  int t_ = 0;
  int clamp_warnings_ = 0;
};

// 2-D double integrator: x'' = (a_p + f_max * a_a - c * x') / m, explicit
// Euler, reward -|x - goal| on the post-step position. Start (-1,-1),
// goal (1,1).
class AdversarialPointMass : public Env {
 public:
  explicit AdversarialPointMass(GameSpec spec);

 protected:
  void do_reset() override;
  double do_step(const Vector& a_p, const Vector& a_a) override;
  Vector observe() const override;

 private:
  Eigen::Vector2d pos_, vel_;
};

// Swingup pendulum, angle measured from upright, starting hanging (theta =
// pi). theta'' = (g/l) sin(theta) + (2*a_p + f_max*a_a - c*theta') / (m l^2),
// explicit Euler, angular velocity clamped to [-8, 8]. Reward
// -(wrap(theta)^2 + 0.1 theta'^2 + 0.001 tau_p^2) on the post-step state.
class AdversarialPendulum : public Env {
 public:
  explicit AdversarialPendulum(GameSpec spec);

 protected:
  void do_reset() override;
  double do_step(const Vector& a_p, const Vector& a_a) override;
  Vector observe() const override;

 private:
  double theta_ = 0.0, omega_ = 0.0;
};

GameSpec point_mass_spec();
GameSpec pendulum_spec();

// name is "point_mass" or "pendulum"; f_max/horizon <= 0 keep the task
// defaults.
std::unique_ptr<Env> make_env(const std::string& name, double f_max = 0.0, int horizon = 0);

// Maps theta to [-pi, pi).
double wrap_angle(double theta);

// Policy interface used by rollouts; implemented by the SAC agent and by
// test doubles.
class Actor {
 public:
  virtual ~Actor() = default;
  virtual Vector act(const Vector& obs, bool deterministic, Rng& rng) = 0;
};

struct EpisodeResult {
  double protagonist_return = 0.0;  // undiscounted sum of r
  double adversary_return = 0.0;    // undiscounted sum of -r
  int length = 0;
  double mass_scale = 1.0;
  double friction_scale = 1.0;
  int clamp_warnings = 0;
};

// adversary == nullptr plays a_a = 0 every step. The seed fully determines
// stochastic-actor noise.
EpisodeResult rollout(Env& env, Actor& protagonist, Actor* adversary, bool deterministic,
                      std::uint64_t seed);

}  // namespace uacer
