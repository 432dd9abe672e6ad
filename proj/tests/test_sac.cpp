#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>
#include <sstream>

#include "uacer/rng.hpp"
#include "uacer/sac.hpp"

using namespace uacer;

namespace {

AgentConfig small_config(int obs = 3, int act = 2) {
  AgentConfig c;
  c.obs_dim = obs;
  c.action_dim = act;
  c.hidden = {8, 8};
  c.k = 5;
  return c;
}

std::vector<Transition> synthetic_batch(int count, int obs_dim, int act_dim, Rng& rng) {
  std::vector<Transition> batch(count);
  for (Transition& t : batch) {
    t.s = Vector::NullaryExpr(obs_dim, [&](Eigen::Index) { return rng.normal(); });
    t.a_p = Vector::NullaryExpr(act_dim, [&](Eigen::Index) { return std::tanh(rng.normal()); });
    t.a_a = Vector::NullaryExpr(act_dim, [&](Eigen::Index) { return std::tanh(rng.normal()); });
    t.r = rng.normal();
    t.s_next = Vector::NullaryExpr(obs_dim, [&](Eigen::Index) { return rng.normal(); });
    t.done = false;
  }
  return batch;
}

// zeroes a net and pins its output to a constant
void make_constant(Mlp& net, double value) {
  for (int l = 0; l < net.layer_count(); ++l) {
    net.weights(l).setZero();
    net.bias(l).setZero();
  }
  net.bias(net.layer_count() - 1)(0) = value;
}

}  // namespace

TEST_CASE("replay buffer gates sampling on minimum fill") {
  ReplayBuffer buf(100, 5);
  Rng rng(1);
  Transition t;
  t.s = Vector::Zero(2);
  t.a_p = Vector::Zero(1);
  t.a_a = Vector::Zero(1);
  t.s_next = Vector::Zero(2);
  for (int i = 0; i < 4; ++i) {
    t.r = i;
    buf.push(t);
    CHECK_FALSE(buf.ready());
    CHECK_THROWS_AS(buf.sample(2, rng), std::logic_error);
  }
  t.r = 4;
  buf.push(t);
  CHECK(buf.ready());
  CHECK(buf.sample(2, rng).size() == 2);
  CHECK_THROWS_AS(buf.sample(6, rng), std::invalid_argument);
  CHECK_THROWS_AS(buf.sample(0, rng), std::invalid_argument);
}

TEST_CASE("replay buffer samples without replacement and overwrites oldest first") {
  ReplayBuffer buf(50, 1);
  Rng rng(2);
  Transition t;
  t.s = Vector::Zero(1);
  t.a_p = Vector::Zero(1);
  t.a_a = Vector::Zero(1);
  t.s_next = Vector::Zero(1);
  for (int i = 0; i < 50; ++i) {
    t.r = i;
    buf.push(t);
  }
  std::vector<Transition> all = buf.sample(50, rng);
  std::set<double> rewards;
  for (const Transition& tr : all) rewards.insert(tr.r);
  CHECK(rewards.size() == 50);  // batch == size forces every element once

  ReplayBuffer ring(4, 1);
  for (int i = 0; i < 6; ++i) {
    t.r = i;
    ring.push(t);
  }
  CHECK(ring.size() == 4);
  std::set<double> kept;
  for (const Transition& tr : ring.sample(4, rng)) kept.insert(tr.r);
  CHECK(kept == std::set<double>{2.0, 3.0, 4.0, 5.0});
}

TEST_CASE("replay buffer rejects non-finite transitions and bad limits") {
  CHECK_THROWS_AS(ReplayBuffer(0, 1), std::invalid_argument);
  CHECK_THROWS_AS(ReplayBuffer(10, 11), std::invalid_argument);
  ReplayBuffer buf(10, 1);
  Transition t;
  t.s = Vector::Zero(1);
  t.a_p = Vector::Zero(1);
  t.a_a = Vector::Zero(1);
  t.s_next = Vector::Zero(1);
  t.r = std::nan("");
  CHECK_THROWS_AS(buf.push(t), std::domain_error);
}

TEST_CASE("policy with vanishing noise acts at its mean") {
  Rng rng(3);
  GaussianPolicy policy(2, 1, {4}, rng);
  for (int l = 0; l < policy.trunk().layer_count(); ++l) {
    policy.trunk().weights(l).setZero();
    policy.trunk().bias(l).setZero();
  }
  policy.trunk().bias(1) << 0.0, -20.0;  // mean 0, log-std at the clamp floor
  Vector a = policy.act(Vector::Zero(2), false, rng);
  CHECK(std::abs(a(0)) < 1e-6);
}

TEST_CASE("deterministic mode saturates toward tanh of the mean") {
  Rng rng(4);
  GaussianPolicy policy(2, 1, {4}, rng);
  for (int l = 0; l < policy.trunk().layer_count(); ++l) {
    policy.trunk().weights(l).setZero();
    policy.trunk().bias(l).setZero();
  }
  policy.trunk().bias(1) << 10.0, 0.0;
  Vector a = policy.act(Vector::Zero(2), true, rng);
  CHECK(a(0) == doctest::Approx(0.99999999587769273).epsilon(1e-12));  // tanh(10)
}

TEST_CASE("sampled actions stay strictly inside the unit box") {
  Rng rng(5);
  GaussianPolicy policy(3, 2, {8}, rng);
  policy.trunk().bias(policy.trunk().layer_count() - 1) << 5.0, -5.0, 10.0, 10.0;
  Rng noise(6);
  for (int i = 0; i < 500; ++i) {
    Vector obs = Vector::NullaryExpr(3, [&](Eigen::Index) { return noise.normal(); });
    Vector a = policy.act(obs, false, noise);
    for (int d = 0; d < 2; ++d) {
      CHECK(a(d) > -1.0);
      CHECK(a(d) < 1.0);
    }
  }
}

TEST_CASE("tanh-gaussian density integrates to one and matches sampling") {
  Rng rng(7);
  GaussianPolicy policy(2, 1, {8}, rng);
  Vector obs(2);
  obs << 0.3, -0.7;
  // trapezoid rule over (-1, 1); the density vanishes at the edges
  const int cells = 20000;
  double integral = 0.0;
  for (int i = 1; i < cells; ++i) {
    const double a = -1.0 + 2.0 * i / cells;
    integral += std::exp(policy.log_prob(obs, (Vector(1) << a).finished())) * (2.0 / cells);
  }
  CHECK(integral == doctest::Approx(1.0).epsilon(1e-3));

  // the log-density reported at sampling time matches the analytic density
  Matrix obs_batch = obs;
  Rng sampler(8);
  GaussianPolicy::BatchSample s = policy.sample_batch(obs_batch, sampler);
  CHECK(s.log_prob[0] ==
        doctest::Approx(policy.log_prob(obs, s.action.col(0))).epsilon(1e-9));
  CHECK(policy.log_prob(obs, s.action.col(0)) ==
        doctest::Approx(s.log_prob[0]).epsilon(1e-9));
}

TEST_CASE("policy rejects non-finite observations and boundary actions") {
  Rng rng(9);
  GaussianPolicy policy(2, 1, {4}, rng);
  Vector bad(2);
  bad << std::nan(""), 0.0;
  CHECK_THROWS_AS(policy.act(bad, false, rng), std::domain_error);
  CHECK_THROWS_AS(policy.log_prob(Vector::Zero(2), (Vector(1) << 1.0).finished()),
                  std::domain_error);
}

TEST_CASE("ensemble construction is diverse and targets start equal to online nets") {
  Rng rng(10);
  EnsembleCritic ens(5, {8}, 5, true, 3e-4, rng);
  CHECK(ens.size() == 5);
  CHECK(ens.construction_diverse());
  std::set<Activation> tags;
  for (int k = 0; k < 5; ++k) tags.insert(ens.tag(k));
  CHECK(tags.size() >= 2);
  for (int k = 0; k < 5; ++k)
    for (int l = 0; l < ens.online(k).layer_count(); ++l)
      CHECK((ens.online(k).weights(l) - ens.target(k).weights(l)).cwiseAbs().maxCoeff() == 0.0);

  EnsembleCritic plain(5, {8}, 4, false, 3e-4, rng);
  for (int k = 0; k < 4; ++k) CHECK(plain.tag(k) == Activation::kRelu);
  CHECK(plain.construction_diverse());  // independent init still separates them
}

TEST_CASE("two-critic ensembles under diversity never share a single tag set") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    EnsembleCritic ens(3, {4}, 2, true, 3e-4, rng);
    CHECK((ens.tag(0) != ens.tag(1)));
  }
}

TEST_CASE("critic targets with discount off reduce to the role-signed reward") {
  Rng rng(11);
  AgentConfig cfg = small_config();
  cfg.gamma = 0.0;
  SacAgent agent(cfg, rng);
  Rng data(12);
  std::vector<Transition> batch = synthetic_batch(16, 3, 2, data);

  SacAgent protagonist = agent;
  SacAgent adversary = agent;
  Rng r1(13), r2(13);
  auto yp = protagonist.critic_update(batch, +1.0, 0, r1).targets;
  auto ya = adversary.critic_update(batch, -1.0, 0, r2).targets;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    CHECK(yp[j] == batch[j].r);
    CHECK(ya[j] == -batch[j].r);
    CHECK(yp[j] + ya[j] == 0.0);
  }
}

TEST_CASE("critics equal to the target value report zero loss") {
  Rng rng(14);
  AgentConfig cfg = small_config();
  cfg.gamma = 0.0;
  SacAgent agent(cfg, rng);
  Rng data(15);
  std::vector<Transition> batch = synthetic_batch(8, 3, 2, data);
  for (Transition& t : batch) t.r = 0.5;
  for (int k = 0; k < agent.critics().size(); ++k)
    make_constant(agent.critics().online(k), 0.5);
  Rng up(16);
  auto result = agent.critic_update(batch, +1.0, 0, up);
  for (double loss : result.losses) CHECK(loss == 0.0);
}

TEST_CASE("single-sample critic loss equals the squared residual") {
  Rng rng(17);
  AgentConfig cfg = small_config();
  cfg.gamma = 0.0;
  SacAgent agent(cfg, rng);
  Rng data(18);
  std::vector<Transition> batch = synthetic_batch(1, 3, 2, data);
  batch[0].r = 0.5;
  for (int k = 0; k < agent.critics().size(); ++k)
    make_constant(agent.critics().online(k), 0.2);
  Rng up(19);
  auto result = agent.critic_update(batch, +1.0, 0, up);
  const double expected = (0.2 - 0.5) * (0.2 - 0.5);
  for (double loss : result.losses) CHECK(loss == expected);
}

TEST_CASE("every critic regresses toward the shared target") {
  Rng rng(20);
  AgentConfig cfg = small_config(2, 1);
  cfg.gamma = 0.0;
  cfg.lr_critic = 1e-2;
  SacAgent agent(cfg, rng);
  Rng data(21);
  std::vector<Transition> batch = synthetic_batch(32, 2, 1, data);
  for (Transition& t : batch) t.r = 0.3 * t.s(0);  // learnable reward surface
  Rng up(22);
  auto first = agent.critic_update(batch, +1.0, 0, up);
  std::vector<double> last;
  for (int i = 0; i < 300; ++i) last = agent.critic_update(batch, +1.0, 0, up).losses;
  for (int k = 0; k < cfg.k; ++k) {
    CHECK(last[k] < first.losses[k]);
    CHECK(last[k] < 0.05);
  }
  // one shared y per sample: the same vector is what each critic regressed to
  CHECK(first.targets.size() == batch.size());
}

TEST_CASE("done transitions drop the bootstrap term") {
  Rng rng(23);
  AgentConfig cfg = small_config();
  cfg.gamma = 0.99;
  SacAgent agent(cfg, rng);
  Rng data(24);
  std::vector<Transition> batch = synthetic_batch(4, 3, 2, data);
  for (Transition& t : batch) t.done = true;
  Rng up(25);
  auto result = agent.critic_update(batch, +1.0, 5, up);
  for (std::size_t j = 0; j < batch.size(); ++j) CHECK(result.targets[j] == batch[j].r);
}

TEST_CASE("critic update input validation") {
  Rng rng(26);
  SacAgent agent(small_config(), rng);
  Rng up(27);
  CHECK_THROWS_AS(agent.critic_update({}, +1.0, 0, up), std::invalid_argument);
  Rng data(28);
  std::vector<Transition> batch = synthetic_batch(2, 3, 2, data);
  CHECK_THROWS_AS(agent.critic_update(batch, 0.5, 0, up), std::invalid_argument);
  std::vector<Transition> bad = batch;
  bad[0].s = Vector::Zero(7);
  CHECK_THROWS_AS(agent.critic_update(bad, +1.0, 0, up), std::invalid_argument);
}

TEST_CASE("constant critics leave the actor objective flat") {
  Rng rng(29);
  AgentConfig cfg = small_config(2, 1);
  cfg.initial_alpha = 1e-300;  // alpha ~ 0: entropy term vanishes
  SacAgent agent(cfg, rng);
  for (int k = 0; k < agent.critics().size(); ++k)
    make_constant(agent.critics().online(k), 1.7);

  // finite-difference the realized loss along several trunk parameters
  Rng probe(30);
  std::vector<Transition> batch = synthetic_batch(16, 2, 1, probe);
  const double h = 1e-4;
  for (int trial = 0; trial < 3; ++trial) {
    SacAgent plus = agent, minus = agent;
    Mlp& wp = plus.policy().trunk();
    Mlp& wm = minus.policy().trunk();
    wp.weights(0)(trial, 0) += h;
    wm.weights(0)(trial, 0) -= h;
    Rng ra(31), rb(31);
    const double lp = plus.actor_update(batch, 0, ra);
    const double lm = minus.actor_update(batch, 0, rb);
    CHECK(std::abs(lp - lm) / (2 * h) < 1e-8);
    CHECK(lp == doctest::Approx(-1.7).epsilon(1e-10));
  }
}

TEST_CASE("the actor climbs a hand-built tent-shaped critic toward its peak") {
  Rng rng(32);
  AgentConfig cfg = small_config(1, 1);
  cfg.hidden = {8};
  cfg.k = 2;
  cfg.schedule.mode = AggregationMode::kMinOfAll;
  cfg.initial_alpha = 1e-12;
  cfg.lr_actor = 3e-3;
  SacAgent agent(cfg, rng);
  // Q(s, a) = -|a - 0.5|, peak at a = 0.5, independent of s
  for (int k = 0; k < 2; ++k) {
    Mlp& net = agent.critics().online(k);
    REQUIRE(net.dims() == std::vector<int>{2, 8, 1});
    net.weights(0).setZero();
    net.bias(0).setZero();
    net.weights(1).setZero();
    net.bias(1).setZero();
    net.weights(0)(0, 1) = 1.0;   // reads the action input
    net.bias(0)(0) = -0.5;        // relu(a - 0.5)
    net.weights(0)(1, 1) = -1.0;
    net.bias(0)(1) = 0.5;         // relu(0.5 - a)
    net.weights(1)(0, 0) = -1.0;
    net.weights(1)(0, 1) = -1.0;
  }
  Rng data(33);
  std::vector<Transition> batch = synthetic_batch(32, 1, 1, data);
  Rng up(34);
  Rng eval(35);
  const double before =
      std::abs(agent.act(Vector::Zero(1), true, eval)(0) - 0.5);
  double first_loss = 0.0, last_loss = 0.0;
  for (int i = 0; i < 300; ++i) {
    const double loss = agent.actor_update(batch, 0, up);
    if (i == 0) first_loss = loss;
    last_loss = loss;
  }
  const double after = std::abs(agent.act(Vector::Zero(1), true, eval)(0) - 0.5);
  CHECK(after < before);
  CHECK(after < 0.1);
  CHECK(last_loss < first_loss);
}

TEST_CASE("actor loss matches an independent recomputation exactly") {
  Rng rng(36);
  SacAgent agent(small_config(), rng);
  Rng data(37);
  std::vector<Transition> batch = synthetic_batch(24, 3, 2, data);
  SacAgent snapshot = agent;
  Rng ra(38), rb(38);
  const double reported = agent.actor_update(batch, 7, ra);

  Matrix s(3, 24);
  for (int j = 0; j < 24; ++j) s.col(j) = batch[j].s;
  GaussianPolicy::BatchSample bs = snapshot.policy().sample_batch(s, rb);
  Matrix z(5, 24);
  z.topRows(3) = s;
  z.bottomRows(2) = bs.action;
  Matrix q(snapshot.critics().size(), 24);
  for (int k = 0; k < snapshot.critics().size(); ++k)
    q.row(k) = snapshot.critics().online(k).forward_batch(z);
  double expected = 0.0;
  std::vector<double> column(snapshot.critics().size());
  for (int j = 0; j < 24; ++j) {
    for (int k = 0; k < snapshot.critics().size(); ++k) column[k] = q(k, j);
    expected += snapshot.alpha() * bs.log_prob[j] -
                aggregate(column, snapshot.config().schedule, 7).value;
  }
  expected /= 24.0;
  CHECK(reported == expected);
}

TEST_CASE("actor update leaves critic parameters untouched") {
  Rng rng(39);
  SacAgent agent(small_config(), rng);
  std::vector<Matrix> before;
  for (int k = 0; k < agent.critics().size(); ++k)
    before.push_back(agent.critics().online(k).weights(0));
  Rng data(40);
  std::vector<Transition> batch = synthetic_batch(8, 3, 2, data);
  Rng up(41);
  agent.actor_update(batch, 0, up);
  for (int k = 0; k < agent.critics().size(); ++k)
    CHECK((agent.critics().online(k).weights(0) - before[k]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("temperature rises while entropy is below target") {
  Rng rng(42);
  AgentConfig cfg = small_config(2, 1);
  SacAgent agent(cfg, rng);
  // log-std head pinned to the floor: near-deterministic policy, log pi >> 0
  Mlp& trunk = agent.policy().trunk();
  const int last = trunk.layer_count() - 1;
  trunk.weights(last).row(1).setZero();
  trunk.bias(last)(1) = -20.0;
  const double alpha_before = agent.alpha();
  Rng data(43);
  std::vector<Transition> batch = synthetic_batch(16, 2, 1, data);
  Rng up(44);
  agent.temperature_update(batch, up);
  CHECK(agent.alpha() > alpha_before);
}

TEST_CASE("two temperature steps match the hand-unrolled scalar recurrence") {
  Rng rng(45);
  AgentConfig cfg = small_config(2, 1);
  SacAgent agent(cfg, rng);
  Rng data(46);
  std::vector<Transition> batch = synthetic_batch(8, 2, 1, data);
  SacAgent replay = agent;
  Rng up(47), clone(47);
  agent.temperature_update(batch, up);
  agent.temperature_update(batch, up);

  // replicate both mean entropy terms from the identical sample stream
  Matrix s(2, 8);
  for (int j = 0; j < 8; ++j) s.col(j) = batch[j].s;
  auto mean_term = [&](Rng& r) {
    GaussianPolicy::BatchSample bs = replay.policy().sample_batch(s, r);
    double m = 0.0;
    for (double lp : bs.log_prob) m += lp + replay.target_entropy();
    return m / 8.0;
  };
  const double t1 = mean_term(clone);
  const double t2 = mean_term(clone);
  double log_alpha = std::log(cfg.initial_alpha);
  double m = 0.0, v = 0.0;
  int step = 0;
  for (double term : {t1, t2}) {
    const double grad = -std::exp(log_alpha) * term;
    ++step;
    m = 0.9 * m + 0.1 * grad;
    v = 0.999 * v + 0.001 * grad * grad;
    const double mhat = m / (1.0 - std::pow(0.9, step));
    const double vhat = v / (1.0 - std::pow(0.999, step));
    log_alpha -= cfg.lr_alpha * mhat / (std::sqrt(vhat) + 1e-8);
  }
  CHECK(agent.log_alpha() == doctest::Approx(log_alpha).epsilon(1e-15));
}

TEST_CASE("variant factory configures critics and aggregation per ablation") {
  AgentConfig base = small_config();
  Rng r1(48);
  SacAgent full = make_variant("full", base, r1);
  CHECK(full.critics().size() == 5);
  CHECK(full.config().schedule.mode == AggregationMode::kTduExponential);
  CHECK(full.critics().construction_diverse());

  Rng r2(49);
  SacAgent two = make_variant("no_ensemble", base, r2);
  CHECK(two.critics().size() == 2);
  CHECK(two.config().schedule.mode == AggregationMode::kMinOfAll);

  Rng r3(50);
  SacAgent no_tdu = make_variant("no_tdu", base, r3);
  CHECK(no_tdu.critics().size() == 5);
  CHECK(no_tdu.config().schedule.mode == AggregationMode::kMinOfAll);

  Rng r4(51);
  SacAgent plain = make_variant("no_diversity", base, r4);
  CHECK(plain.config().schedule.mode == AggregationMode::kTduExponential);
  for (int k = 0; k < plain.critics().size(); ++k)
    CHECK(plain.critics().tag(k) == Activation::kRelu);

  Rng r5(52);
  SacAgent pmin = make_variant("pessimism_min", base, r5);
  CHECK(pmin.config().schedule.mode == AggregationMode::kPessimismMin);

  Rng r6(53);
  CHECK_THROWS_AS(make_variant("uacer_plus", base, r6), std::invalid_argument);
}

TEST_CASE("ensemble mean variance shrinks like one over K under iid critic noise") {
  Rng rng(54);
  Mlp base = Mlp::random({4, 8, 1}, {Activation::kRelu, Activation::kIdentity}, rng);
  const int n = 1000, k = 5;
  std::vector<double> mean_dev(n), single_dev(n);
  for (int i = 0; i < n; ++i) {
    Vector x = Vector::NullaryExpr(4, [&](Eigen::Index) { return rng.normal(); });
    const double truth = base.evaluate(x)(0);
    double sum = 0.0, first = 0.0;
    for (int j = 0; j < k; ++j) {
      const double q = truth + rng.normal();
      if (j == 0) first = q;
      sum += q;
    }
    mean_dev[i] = sum / k - truth;
    single_dev[i] = first - truth;
  }
  auto variance = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= v.size();
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return ss / (v.size() - 1);
  };
  const double ratio = variance(mean_dev) / variance(single_dev);
  CHECK(ratio > 0.15);
  CHECK(ratio < 0.27);
}

TEST_CASE("agent checkpoints restore bitwise-identical state and behavior") {
  Rng rng(55);
  SacAgent agent(small_config(), rng);
  Rng data(56);
  std::vector<Transition> batch = synthetic_batch(16, 3, 2, data);
  Rng up(57);
  agent.critic_update(batch, +1.0, 1, up);
  agent.actor_update(batch, 1, up);
  agent.temperature_update(batch, up);

  std::stringstream ss;
  agent.save(ss);
  SacAgent back = SacAgent::load(ss);
  CHECK(back.fingerprint() == agent.fingerprint());

  Rng e1(58), e2(58);
  Vector obs = Vector::Ones(3);
  CHECK((agent.act(obs, false, e1) - back.act(obs, false, e2)).cwiseAbs().maxCoeff() == 0.0);

  Rng u1(59), u2(59);
  auto ra = agent.critic_update(batch, -1.0, 2, u1);
  auto rb = back.critic_update(batch, -1.0, 2, u2);
  for (std::size_t i = 0; i < ra.losses.size(); ++i) CHECK(ra.losses[i] == rb.losses[i]);
  CHECK(agent.fingerprint() == back.fingerprint());
}

TEST_CASE("corrupt agent checkpoints are rejected") {
  std::stringstream empty;
  CHECK_THROWS_AS(SacAgent::load(empty), std::runtime_error);
  std::stringstream wrong("mlp 1\n");
  CHECK_THROWS_AS(SacAgent::load(wrong), std::runtime_error);
  std::stringstream future("sac_agent 99\n");
  CHECK_THROWS_AS(SacAgent::load(future), std::runtime_error);
}

TEST_CASE("identical seeds build identical agents") {
  AgentConfig cfg = small_config();
  Rng r1(60), r2(60), r3(61);
  SacAgent a(cfg, r1), b(cfg, r2), c(cfg, r3);
  CHECK(a.fingerprint() == b.fingerprint());
  CHECK(a.fingerprint() != c.fingerprint());
}
