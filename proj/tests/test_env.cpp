#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <memory>

#include "uacer/game.hpp"
#include "uacer/rng.hpp"

using namespace uacer;

namespace {

class ConstantActor : public Actor {
 public:
  explicit ConstantActor(Vector a) : a_(std::move(a)) {}
  Vector act(const Vector&, bool, Rng&) override { return a_; }

 private:
  Vector a_;
};

class NoisyActor : public Actor {
 public:
  explicit NoisyActor(int dim) : dim_(dim) {}
  Vector act(const Vector&, bool deterministic, Rng& rng) override {
    Vector a(dim_);
    for (int i = 0; i < dim_; ++i)
      a(i) = deterministic ? 0.5 : std::tanh(rng.normal());
    return a;
  }

 private:
  int dim_;
};

}  // namespace

TEST_CASE("point mass at rest under zero force keeps its frozen-start reward") {
  auto env = make_env("point_mass");
  Vector obs = env->reset();
  CHECK(obs.size() == 4);
  CHECK(obs(0) == -1.0);
  CHECK(obs(1) == -1.0);
  CHECK(obs(2) == 0.0);
  CHECK(obs(3) == 0.0);
  Env::StepResult sr = env->step(Vector::Zero(2), Vector::Zero(2));
  CHECK(sr.reward == doctest::Approx(-2.8284271247461903).epsilon(1e-15));  // -2*sqrt(2)
  CHECK(sr.obs(0) == -1.0);  // no motion from rest under zero force
  CHECK(sr.obs(2) == 0.0);
  CHECK_FALSE(sr.done);
}

TEST_CASE("zero-policy rollout returns H times the frozen-start reward") {
  auto env = make_env("point_mass");
  ConstantActor zero(Vector::Zero(2));
  EpisodeResult r = rollout(*env, zero, nullptr, true, 0);
  CHECK(r.length == 500);
  CHECK(r.protagonist_return == doctest::Approx(500 * -2.8284271247461903).epsilon(1e-12));
}

TEST_CASE("horizon one makes the return a single-step reward") {
  auto env = make_env("point_mass", 0.0, 1);
  ConstantActor zero(Vector::Zero(2));
  EpisodeResult r = rollout(*env, zero, nullptr, true, 0);
  CHECK(r.length == 1);
  CHECK(r.protagonist_return == doctest::Approx(-2.8284271247461903).epsilon(1e-15));
}

TEST_CASE("rollouts with the same seed are identical") {
  auto env = make_env("point_mass", 0.0, 50);
  NoisyActor prot(2), adv(2);
  EpisodeResult a = rollout(*env, prot, &adv, false, 99);
  EpisodeResult b = rollout(*env, prot, &adv, false, 99);
  CHECK(a.protagonist_return == b.protagonist_return);
  CHECK(a.length == b.length);
  EpisodeResult c = rollout(*env, prot, &adv, false, 100);
  CHECK(a.protagonist_return != c.protagonist_return);
}

TEST_CASE("adversary force exactly cancels an opposing protagonist push") {
  auto env = make_env("point_mass");
  env->reset();
  // f_max * (-0.6) == -0.3 bitwise, so the net force is exactly zero
  Vector a_p(2), a_a(2);
  a_p << 0.3, 0.3;
  a_a << -0.6, -0.6;
  Env::StepResult sr = env->step(a_p, a_a);
  CHECK(sr.obs(2) == 0.0);
  CHECK(sr.obs(3) == 0.0);
  CHECK(sr.obs(0) == -1.0);
}

TEST_CASE("with zero net force the dynamics reduce to friction decay") {
  auto env = make_env("point_mass");
  env->reset();
  Vector push(2), zero2 = Vector::Zero(2);
  push << 1.0, 0.0;
  Env::StepResult sr = env->step(push, zero2);
  const double v = sr.obs(2);
  CHECK(v != 0.0);
  Vector a_p(2), a_a(2);
  a_p << 0.3, 0.3;
  a_a << -0.6, -0.6;
  Env::StepResult next = env->step(a_p, a_a);
  // independent evaluation of the same Euler update
  const double expected = v + 0.05 * (0.0 - 0.1 * v) / 1.0;
  CHECK(next.obs(2) == expected);
}

TEST_CASE("doubling the mass exactly halves the one-step velocity gain") {
  auto nominal = make_env("point_mass");
  auto heavy = make_env("point_mass");
  heavy->set_params(2.0, 1.0);
  Vector push(2), zero2 = Vector::Zero(2);
  push << 1.0, 0.0;
  nominal->reset();
  heavy->reset();
  const double dv1 = nominal->step(push, zero2).obs(2);
  const double dv2 = heavy->step(push, zero2).obs(2);
  CHECK(dv2 == 0.5 * dv1);
  CHECK(dv1 == 0.05);
}

TEST_CASE("zero friction scale preserves velocity exactly") {
  auto env = make_env("point_mass");
  env->set_params(1.0, 0.0);
  env->reset();
  Vector push(2), zero2 = Vector::Zero(2);
  push << 1.0, 1.0;
  Env::StepResult sr = env->step(push, zero2);
  const double v = sr.obs(2);
  for (int i = 0; i < 10; ++i) sr = env->step(zero2, zero2);
  CHECK(sr.obs(2) == v);
  CHECK(sr.obs(3) == v);
}

TEST_CASE("unit scales leave the dynamics bit-identical") {
  auto a = make_env("point_mass");
  auto b = make_env("point_mass");
  b->set_params(1.0, 1.0);
  a->reset();
  b->reset();
  Rng rng(4);
  for (int i = 0; i < 10; ++i) {
    Vector a_p(2), a_a(2);
    for (int j = 0; j < 2; ++j) {
      a_p(j) = std::tanh(rng.normal());
      a_a(j) = std::tanh(rng.normal());
    }
    Env::StepResult ra = a->step(a_p, a_a);
    Env::StepResult rb = b->step(a_p, a_a);
    CHECK((ra.obs - rb.obs).cwiseAbs().maxCoeff() == 0.0);
    CHECK(ra.reward == rb.reward);
  }
}

TEST_CASE("set_params rejects non-positive mass and negative friction") {
  auto env = make_env("point_mass");
  CHECK_THROWS_AS(env->set_params(0.0, 1.0), std::out_of_range);
  CHECK_THROWS_AS(env->set_params(-1.0, 1.0), std::out_of_range);
  CHECK_THROWS_AS(env->set_params(1.0, -0.5), std::out_of_range);
  CHECK_NOTHROW(env->set_params(1.0, 0.0));
}

TEST_CASE("stepping a finished or unstarted episode is a state error") {
  auto env = make_env("point_mass", 0.0, 1);
  CHECK_THROWS_AS(env->step(Vector::Zero(2), Vector::Zero(2)), std::logic_error);
  env->reset();
  Env::StepResult sr = env->step(Vector::Zero(2), Vector::Zero(2));
  CHECK(sr.done);
  CHECK_THROWS_AS(env->step(Vector::Zero(2), Vector::Zero(2)), std::logic_error);
}

TEST_CASE("out-of-range actions are clamped and counted") {
  auto a = make_env("point_mass");
  auto b = make_env("point_mass");
  a->reset();
  b->reset();
  Vector big(2), one(2), zero2 = Vector::Zero(2);
  big << 2.0, 0.0;
  one << 1.0, 0.0;
  Env::StepResult ra = a->step(big, zero2);
  Env::StepResult rb = b->step(one, zero2);
  CHECK((ra.obs - rb.obs).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a->clamp_warnings() == 1);
  CHECK(b->clamp_warnings() == 0);
  // adversary channel never exceeds f_max: a_a = 5 acts like a_a = 1
  auto c = make_env("point_mass");
  auto d = make_env("point_mass");
  c->reset();
  d->reset();
  Vector five(2), onev(2);
  five << 5.0, 5.0;
  onev << 1.0, 1.0;
  CHECK(c->step(zero2, five).obs(2) == d->step(zero2, onev).obs(2));
}

TEST_CASE("non-finite actions are rejected") {
  auto env = make_env("point_mass");
  env->reset();
  Vector bad(2);
  bad << std::nan(""), 0.0;
  CHECK_THROWS_AS(env->step(bad, Vector::Zero(2)), std::domain_error);
}

TEST_CASE("episode accounting is zero-sum") {
  auto env = make_env("point_mass", 0.0, 120);
  NoisyActor prot(2), adv(2);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    EpisodeResult r = rollout(*env, prot, &adv, false, seed);
    CHECK(r.protagonist_return + r.adversary_return == 0.0);
  }
}

TEST_CASE("kinetic energy decays monotonically without forces") {
  auto env = make_env("point_mass");
  env->reset();
  Vector push(2), zero2 = Vector::Zero(2);
  push << 1.0, 1.0;
  Env::StepResult sr{};
  for (int i = 0; i < 5; ++i) sr = env->step(push, zero2);
  double ke = sr.obs(2) * sr.obs(2) + sr.obs(3) * sr.obs(3);
  CHECK(ke > 0.0);
  for (int i = 0; i < 50; ++i) {
    sr = env->step(zero2, zero2);
    const double next = sr.obs(2) * sr.obs(2) + sr.obs(3) * sr.obs(3);
    CHECK(next <= ke);
    ke = next;
  }
}

TEST_CASE("pendulum starts hanging and pays the squared-angle cost") {
  auto env = make_env("pendulum");
  Vector obs = env->reset();
  REQUIRE(obs.size() == 3);
  CHECK(obs(0) == doctest::Approx(-1.0).epsilon(1e-15));  // cos(pi)
  CHECK(obs(2) == 0.0);
  Env::StepResult sr = env->step(Vector::Zero(1), Vector::Zero(1));
  // wrap(pi)^2 = pi^2; omega term is ~1e-35 after one torqueless step
  CHECK(sr.reward == doctest::Approx(-9.869604401089358).epsilon(1e-12));
}

TEST_CASE("pendulum torque moves angular velocity in the commanded direction") {
  auto env = make_env("pendulum");
  env->reset();
  Vector one(1), zero1 = Vector::Zero(1);
  one << 1.0;
  Env::StepResult sr = env->step(one, zero1);
  // dt * tau_p / (m l^2) = 0.05 * 2, plus a ~1e-17 gravity term at theta=pi
  CHECK(sr.obs(2) == doctest::Approx(0.1).epsilon(1e-9));
  // torque cost: -0.001 * tau_p^2 = -0.004 beyond the angle/velocity terms
  auto quiet = make_env("pendulum");
  quiet->reset();
  Env::StepResult qr = quiet->step(zero1, zero1);
  CHECK(sr.reward < qr.reward);
}

TEST_CASE("pendulum angular velocity is clamped") {
  auto env = make_env("pendulum");
  env->set_params(1.0, 0.0);
  env->reset();
  Vector one(1), zero1 = Vector::Zero(1);
  one << 1.0;
  double peak = 0.0;
  for (int i = 0; i < 400; ++i) {
    Env::StepResult sr = env->step(one, zero1);
    peak = std::max(peak, std::abs(sr.obs(2)));
    CHECK(std::abs(sr.obs(2)) <= 8.0);
  }
  CHECK(peak == 8.0);  // the clamp actually engages under sustained torque
}

TEST_CASE("angle wrapping maps to [-pi, pi)") {
  const double pi = 3.141592653589793238462643383279502884;
  CHECK(wrap_angle(0.0) == 0.0);
  CHECK(wrap_angle(pi) == -pi);
  CHECK(wrap_angle(-pi) == -pi);
  CHECK(wrap_angle(2 * pi) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(wrap_angle(pi / 2) == doctest::Approx(pi / 2).epsilon(1e-15));
  CHECK(wrap_angle(-3 * pi / 2) == doctest::Approx(pi / 2).epsilon(1e-12));
  CHECK(wrap_angle(7.0) == doctest::Approx(7.0 - 2 * pi).epsilon(1e-12));
}

TEST_CASE("environment factory validates names and applies overrides") {
  CHECK_THROWS_AS(make_env("cartpole"), std::invalid_argument);
  auto env = make_env("pendulum", 0.75, 42);
  CHECK(env->spec().f_max == 0.75);
  CHECK(env->spec().horizon == 42);
  CHECK(env->spec().name == "pendulum");
  auto defaults = make_env("point_mass");
  CHECK(defaults->spec().f_max == 0.5);
  CHECK(defaults->spec().horizon == 500);
  CHECK(defaults->spec().gamma == 0.99);
  // sweep grids bracket the nominal setting
  bool has_nominal = false;
  for (double g : defaults->spec().mass_grid) has_nominal |= g == 1.0;
  CHECK(has_nominal);
}

TEST_CASE("rollout rejects mis-sized actors") {
  auto env = make_env("point_mass", 0.0, 3);
  ConstantActor bad(Vector::Zero(3));
  CHECK_THROWS_AS(rollout(*env, bad, nullptr, true, 0), std::invalid_argument);
  ConstantActor good(Vector::Zero(2));
  ConstantActor bad_adv(Vector::Zero(1));
  CHECK_THROWS_AS(rollout(*env, good, &bad_adv, true, 0), std::invalid_argument);
}
