#include "uacer/game.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace uacer {
namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

}  // namespace

void Env::set_params(double mass_scale, double friction_scale) {
  if (!(mass_scale > 0.0))
    throw std::out_of_range("set_params: mass_scale must be positive");
  if (friction_scale < 0.0)
    throw std::out_of_range("set_params: friction_scale must be non-negative");
  mass_scale_ = mass_scale;
  friction_scale_ = friction_scale;
}

Vector Env::reset() {
  do_reset();
  t_ = 0;
  active_ = true;
  clamp_warnings_ = 0;
  return observe();
}

Env::StepResult Env::step(const Vector& a_p, const Vector& a_a) {
  if (!active_) throw std::logic_error("step: episode is not active (reset first)");
  if (a_p.size() != spec_.protagonist_dim || a_a.size() != spec_.adversary_dim)
    throw std::invalid_argument("step: action dimension mismatch");
  if (!a_p.allFinite() || !a_a.allFinite())
    throw std::domain_error("step: non-finite action");
  Vector cp = a_p, ca = a_a;
  for (Vector* v : {&cp, &ca})
    for (Eigen::Index i = 0; i < v->size(); ++i)
      if ((*v)(i) < -1.0 || (*v)(i) > 1.0) {
        (*v)(i) = std::clamp((*v)(i), -1.0, 1.0);
        ++clamp_warnings_;
      }
  const double reward = do_step(cp, ca);
  ++t_;
  const bool done = t_ >= spec_.horizon;
  if (done) active_ = false;
  return {observe(), reward, done};
}

AdversarialPointMass::AdversarialPointMass(GameSpec spec) : Env(std::move(spec)) {
  do_reset();
}

void AdversarialPointMass::do_reset() {
  pos_ << -1.0, -1.0;
  vel_.setZero();
}

double AdversarialPointMass::do_step(const Vector& a_p, const Vector& a_a) {
  const double m = effective_mass();
  const double c = effective_friction();
  const Eigen::Vector2d force = a_p + spec().f_max * a_a;
  const Eigen::Vector2d accel = (force - c * vel_) / m;
  pos_ += kDt * vel_;
  vel_ += kDt * accel;
  const Eigen::Vector2d goal(1.0, 1.0);
  return -(pos_ - goal).norm();
}

Vector AdversarialPointMass::observe() const {
  Vector obs(4);
  obs << pos_(0), pos_(1), vel_(0), vel_(1);
  return obs;
}

AdversarialPendulum::AdversarialPendulum(GameSpec spec) : Env(std::move(spec)) {
  do_reset();
}

void AdversarialPendulum::do_reset() {
  theta_ = kPi;  // hanging down
  omega_ = 0.0;
}

double AdversarialPendulum::do_step(const Vector& a_p, const Vector& a_a) {
  constexpr double kGravity = 9.81, kLength = 1.0;
  const double m = effective_mass();
  const double c = effective_friction();
  const double tau_p = 2.0 * a_p(0);
  const double tau = tau_p + spec().f_max * a_a(0);
  const double accel =
      (kGravity / kLength) * std::sin(theta_) + (tau - c * omega_) / (m * kLength * kLength);
  theta_ += kDt * omega_;
  omega_ = std::clamp(omega_ + kDt * accel, -8.0, 8.0);
  const double a = wrap_angle(theta_);
  return -(a * a + 0.1 * omega_ * omega_ + 0.001 * tau_p * tau_p);
}

Vector AdversarialPendulum::observe() const {
  Vector obs(3);
  obs << std::cos(theta_), std::sin(theta_), omega_;
  return obs;
}

GameSpec point_mass_spec() {
  GameSpec s;
  s.name = "point_mass";
  s.obs_dim = 4;
  s.protagonist_dim = 2;
  s.adversary_dim = 2;
  s.f_max = 0.5;
  return s;
}

GameSpec pendulum_spec() {
  GameSpec s;
  s.name = "pendulum";
  s.obs_dim = 3;
  s.protagonist_dim = 1;
  s.adversary_dim = 1;
  s.f_max = 0.5;
  return s;
}

std::unique_ptr<Env> make_env(const std::string& name, double f_max, int horizon) {
  GameSpec s;
  if (name == "point_mass")
    s = point_mass_spec();
  else if (name == "pendulum")
    s = pendulum_spec();
  else
    throw std::invalid_argument("unknown environment '" + name + "'");
  if (f_max > 0.0) s.f_max = f_max;
  if (horizon > 0) s.horizon = horizon;
  if (name == "point_mass") return std::make_unique<AdversarialPointMass>(s);
  return std::make_unique<AdversarialPendulum>(s);
}

double wrap_angle(double theta) {
  double a = std::fmod(theta + kPi, 2.0 * kPi);
  if (a < 0.0) a += 2.0 * kPi;
  return a - kPi;
}

EpisodeResult rollout(Env& env, Actor& protagonist, Actor* adversary, bool deterministic,
                      std::uint64_t seed) {
  Rng rng(seed);
  Rng prot_rng = rng.split(1);
  Rng adv_rng = rng.split(2);
  EpisodeResult result;
  result.mass_scale = env.mass_scale();
  result.friction_scale = env.friction_scale();
  Vector obs = env.reset();
  const Vector zero_adv = Vector::Zero(env.spec().adversary_dim);
  while (true) {
    Vector a_p = protagonist.act(obs, deterministic, prot_rng);
    if (a_p.size() != env.spec().protagonist_dim)
      throw std::invalid_argument("rollout: protagonist action dimension mismatch");
    Vector a_a = zero_adv;
    if (adversary != nullptr) {
      a_a = adversary->act(obs, deterministic, adv_rng);
      if (a_a.size() != env.spec().adversary_dim)
        throw std::invalid_argument("rollout: adversary action dimension mismatch");
    }
    Env::StepResult sr = env.step(a_p, a_a);
    result.protagonist_return += sr.reward;
    result.adversary_return += -sr.reward;
    ++result.length;
    obs = sr.obs;
    if (sr.done) break;
  }
  result.clamp_warnings = env.clamp_warnings();
  return result;
}

}  // namespace uacer
