#include "uacer/sac.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace uacer {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178032973640562;
constexpr double kLog2 = 0.69314718055994530941723212145818;

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

// log(1 - tanh(u)^2), stable for large |u|
double log_one_minus_tanh_sq(double u) { return 2.0 * (kLog2 - u - softplus(-2.0 * u)); }

void check_role(double role_sign) {
  if (role_sign != 1.0 && role_sign != -1.0)
    throw std::invalid_argument("role_sign must be +1 (protagonist) or -1 (adversary)");
}

void write_hex_line(std::ostream& out, const char* tag, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%a", v);
  out << tag << ' ' << buf << '\n';
}

double read_hex_tagged(std::istream& in, const std::string& tag) {
  std::string tok;
  if (!(in >> tok) || tok != tag)
    throw std::runtime_error("agent checkpoint: expected '" + tag + "'");
  if (!(in >> tok)) throw std::runtime_error("agent checkpoint truncated at " + tag);
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0')
    throw std::runtime_error("agent checkpoint: bad value for " + tag);
  return v;
}

}  // namespace

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t min_fill)
    : capacity_(capacity), min_fill_(min_fill) {
  if (capacity == 0) throw std::invalid_argument("ReplayBuffer: zero capacity");
  if (min_fill == 0 || min_fill > capacity)
    throw std::invalid_argument("ReplayBuffer: min_fill must be in [1, capacity]");
}

void ReplayBuffer::push(Transition t) {
  if (!t.s.allFinite() || !t.a_p.allFinite() || !t.a_a.allFinite() || !t.s_next.allFinite() ||
      !std::isfinite(t.r))
    throw std::domain_error("ReplayBuffer::push: non-finite transition");
  if (data_.size() < capacity_) {
    data_.push_back(std::move(t));
  } else {
    data_[next_] = std::move(t);
    next_ = (next_ + 1) % capacity_;
  }
}

std::vector<Transition> ReplayBuffer::sample(std::size_t batch, Rng& rng) const {
  if (!ready())
    throw std::logic_error("ReplayBuffer::sample: only " + std::to_string(data_.size()) +
                           " transitions stored, minimum fill is " + std::to_string(min_fill_));
  if (batch == 0 || batch > data_.size())
    throw std::invalid_argument("ReplayBuffer::sample: bad batch size");
  std::unordered_set<std::uint64_t> picked;
  picked.reserve(batch * 2);
  std::vector<Transition> out;
  out.reserve(batch);
  while (out.size() < batch) {
    const std::uint64_t idx = rng.below(data_.size());
    if (picked.insert(idx).second) out.push_back(data_[idx]);
  }
  return out;
}

GaussianPolicy::GaussianPolicy(int obs_dim, int action_dim, const std::vector<int>& hidden,
                               Rng& rng)
    : action_dim_(action_dim), trunk_(Mlp({1, 2}, {Activation::kIdentity})) {
  if (obs_dim <= 0 || action_dim <= 0)
    throw std::invalid_argument("GaussianPolicy: dimensions must be positive");
  std::vector<int> dims{obs_dim};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(2 * action_dim);
  std::vector<Activation> acts(dims.size() - 1, Activation::kRelu);
  acts.back() = Activation::kIdentity;
  trunk_ = Mlp::random(dims, acts, rng);
}

GaussianPolicy::GaussianPolicy(Mlp trunk, int action_dim)
    : action_dim_(action_dim), trunk_(std::move(trunk)) {
  if (trunk_.output_dim() != 2 * action_dim)
    throw std::invalid_argument("GaussianPolicy: trunk must emit mean and log-std per dim");
}

Vector GaussianPolicy::act(const Vector& obs, bool deterministic, Rng& rng) const {
  if (!obs.allFinite()) throw std::domain_error("GaussianPolicy::act: non-finite observation");
  const Vector head = trunk_.evaluate(obs);
  Vector a(action_dim_);
  for (int i = 0; i < action_dim_; ++i) {
    double u = head(i);
    if (!deterministic) {
      const double l = std::clamp(head(action_dim_ + i), kLogStdMin, kLogStdMax);
      u += std::exp(l) * rng.normal();
    }
    a(i) = std::tanh(std::clamp(u, -kPreSquashLimit, kPreSquashLimit));
  }
  return a;
}

GaussianPolicy::BatchSample GaussianPolicy::sample_batch(const Matrix& obs, Rng& rng) const {
  if (!obs.allFinite())
    throw std::domain_error("GaussianPolicy::sample_batch: non-finite observation");
  const Matrix head = trunk_.evaluate_batch(obs);
  const Eigen::Index b = obs.cols();
  BatchSample s;
  s.mean = head.topRows(action_dim_);
  s.logstd_raw = head.bottomRows(action_dim_);
  s.logstd = s.logstd_raw.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
  s.eps.resize(action_dim_, b);
  s.u_raw.resize(action_dim_, b);
  s.u.resize(action_dim_, b);
  s.action.resize(action_dim_, b);
  s.log_prob.assign(b, 0.0);
  for (Eigen::Index j = 0; j < b; ++j) {
    double lp = 0.0;
    for (int i = 0; i < action_dim_; ++i) {
      const double eps = rng.normal();
      const double l = s.logstd(i, j);
      const double u_raw = s.mean(i, j) + std::exp(l) * eps;
      const double u = std::clamp(u_raw, -kPreSquashLimit, kPreSquashLimit);
      s.eps(i, j) = eps;
      s.u_raw(i, j) = u_raw;
      s.u(i, j) = u;
      s.action(i, j) = std::tanh(u);
      lp += -0.5 * eps * eps - l - kHalfLog2Pi - log_one_minus_tanh_sq(u);
    }
    s.log_prob[j] = lp;
  }
  return s;
}

double GaussianPolicy::log_prob(const Vector& obs, const Vector& action) const {
  if (action.size() != action_dim_)
    throw std::invalid_argument("GaussianPolicy::log_prob: action dimension mismatch");
  const Vector head = trunk_.evaluate(obs);
  double lp = 0.0;
  for (int i = 0; i < action_dim_; ++i) {
    const double a = action(i);
    if (!(a > -1.0 && a < 1.0))
      throw std::domain_error("GaussianPolicy::log_prob: action outside (-1, 1)");
    const double u = std::atanh(a);
    const double l = std::clamp(head(action_dim_ + i), kLogStdMin, kLogStdMax);
    const double z = (u - head(i)) / std::exp(l);
    lp += -0.5 * z * z - l - kHalfLog2Pi - std::log1p(-a * a);
  }
  return lp;
}

EnsembleCritic::EnsembleCritic(int input_dim, const std::vector<int>& hidden, int k,
                               bool diversity, double lr, Rng& rng) {
  if (k < 1) throw std::invalid_argument("EnsembleCritic: need at least one critic");
  if (input_dim <= 0) throw std::invalid_argument("EnsembleCritic: bad input dim");
  const Activation pool[] = {Activation::kRelu, Activation::kLeakyRelu, Activation::kElu};
  tags_.resize(k, Activation::kRelu);
  if (diversity) {
    for (int i = 0; i < k; ++i) tags_[i] = pool[rng.below(3)];
    if (k >= 2 && std::all_of(tags_.begin(), tags_.end(),
                              [&](Activation a) { return a == tags_[0]; }))
      tags_[k - 1] = tags_[0] == Activation::kRelu ? Activation::kElu : Activation::kRelu;
  }
  std::vector<int> dims{input_dim};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(1);
  for (int i = 0; i < k; ++i) {
    std::vector<Activation> acts(dims.size() - 1, tags_[i]);
    acts.back() = Activation::kIdentity;
    online_.push_back(Mlp::random(dims, acts, rng, diversity ? 0.01 : 0.0));
    target_.push_back(online_.back());
    adam_.emplace_back(online_.back(), lr);
  }
}

void EnsembleCritic::polyak(double tau) {
  for (int k = 0; k < size(); ++k) polyak_update(target_[k], online_[k], tau);
}

bool EnsembleCritic::construction_diverse() const {
  for (int a = 0; a < size(); ++a)
    for (int b = a + 1; b < size(); ++b) {
      if (tags_[a] != tags_[b]) return true;
      for (int l = 0; l < online_[a].layer_count(); ++l)
        if ((online_[a].weights(l) - online_[b].weights(l)).cwiseAbs().maxCoeff() != 0.0)
          return true;
    }
  return false;
}

SacAgent::SacAgent(AgentConfig config, Rng& rng)
    : config_(std::move(config)),
      policy_(config_.obs_dim, config_.action_dim, config_.hidden, rng),
      actor_adam_(policy_.trunk(), config_.lr_actor),
      critics_(config_.obs_dim + config_.action_dim, config_.hidden, config_.k,
               config_.diversity, config_.lr_critic, rng),
      alpha_adam_(config_.lr_alpha) {
  config_.schedule.validate();
  if (config_.initial_alpha <= 0.0)
    throw std::invalid_argument("SacAgent: initial_alpha must be positive");
  log_alpha_ = std::log(config_.initial_alpha);
}

double SacAgent::alpha() const { return std::exp(log_alpha_); }

Vector SacAgent::act(const Vector& obs, bool deterministic, Rng& rng) {
  return policy_.act(obs, deterministic, rng);
}

Matrix SacAgent::gather_obs(const std::vector<Transition>& batch, bool next) const {
  Matrix m(config_.obs_dim, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const Vector& s = next ? batch[j].s_next : batch[j].s;
    if (s.size() != config_.obs_dim)
      throw std::invalid_argument("transition state dimension mismatch");
    m.col(static_cast<Eigen::Index>(j)) = s;
  }
  return m;
}

Matrix SacAgent::gather_actions(const std::vector<Transition>& batch, double role_sign) const {
  Matrix m(config_.action_dim, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t j = 0; j < batch.size(); ++j) {
    const Vector& a = role_sign > 0 ? batch[j].a_p : batch[j].a_a;
    if (a.size() != config_.action_dim)
      throw std::invalid_argument("transition action dimension mismatch");
    m.col(static_cast<Eigen::Index>(j)) = a;
  }
  return m;
}

SacAgent::CriticUpdateResult SacAgent::critic_update(const std::vector<Transition>& batch,
                                                     double role_sign, int n, Rng& rng) {
  check_role(role_sign);
  if (batch.empty()) throw std::invalid_argument("critic_update: empty batch");
  const Eigen::Index b = static_cast<Eigen::Index>(batch.size());
  const int k = critics_.size();
  const double a = alpha();

  // shared soft Bellman target from the K target critics
  const Matrix s_next = gather_obs(batch, true);
  const GaussianPolicy::BatchSample next_sample = policy_.sample_batch(s_next, rng);
  Matrix z_next(config_.obs_dim + config_.action_dim, b);
  z_next.topRows(config_.obs_dim) = s_next;
  z_next.bottomRows(config_.action_dim) = next_sample.action;
  Matrix q_targets(k, b);
  for (int i = 0; i < k; ++i) q_targets.row(i) = critics_.target(i).evaluate_batch(z_next);

  std::vector<double> y(batch.size());
  std::vector<double> column(k);
  for (Eigen::Index j = 0; j < b; ++j) {
    for (int i = 0; i < k; ++i) column[i] = q_targets(i, j);
    const double q_agg = aggregate(column, config_.schedule, n).value;
    const double cont = batch[j].done ? 0.0 : 1.0;
    y[j] = role_sign * batch[j].r +
           config_.gamma * cont * (q_agg - a * next_sample.log_prob[j]);
    if (!std::isfinite(y[j]))
      throw std::domain_error("critic_update: non-finite target at sample " + std::to_string(j));
  }

  // every critic regresses toward the same y
  Matrix z(config_.obs_dim + config_.action_dim, b);
  z.topRows(config_.obs_dim) = gather_obs(batch, false);
  z.bottomRows(config_.action_dim) = gather_actions(batch, role_sign);
  CriticUpdateResult result;
  result.targets = y;
  result.losses.resize(k);
  for (int i = 0; i < k; ++i) {
    const Matrix q = critics_.online(i).forward_batch(z);
    Matrix dy(1, b);
    double loss = 0.0;
    for (Eigen::Index j = 0; j < b; ++j) {
      const double diff = q(0, j) - y[j];
      loss += diff * diff;
      dy(0, j) = 2.0 * diff / static_cast<double>(b);
    }
    result.losses[i] = loss / static_cast<double>(b);
    critics_.adam(i).step(critics_.online(i), critics_.online(i).backward(dy));
  }

  ++critic_updates_;
  if (config_.target_update_interval > 0 &&
      critic_updates_ % config_.target_update_interval == 0)
    critics_.polyak(config_.tau);
  return result;
}

double SacAgent::actor_update(const std::vector<Transition>& batch, int n, Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("actor_update: empty batch");
  const Eigen::Index b = static_cast<Eigen::Index>(batch.size());
  const int k = critics_.size();
  const int d = config_.action_dim;
  const double a = alpha();

  const Matrix s = gather_obs(batch, false);
  const GaussianPolicy::BatchSample sample = policy_.sample_batch(s, rng);
  Matrix z(config_.obs_dim + d, b);
  z.topRows(config_.obs_dim) = s;
  z.bottomRows(d) = sample.action;

  // values and action-gradients of every online critic; the backward pass
  // here only reads critic parameters, it never steps them
  Matrix q_values(k, b);
  std::vector<Matrix> dq_da(k);
  for (int i = 0; i < k; ++i) {
    q_values.row(i) = critics_.online(i).forward_batch(z);
    dq_da[i] = critics_.online(i).backward(Matrix::Ones(1, b)).dx.bottomRows(d);
  }

  double loss = 0.0;
  Matrix dqe_da = Matrix::Zero(d, b);
  std::vector<double> column(k);
  for (Eigen::Index j = 0; j < b; ++j) {
    for (int i = 0; i < k; ++i) column[i] = q_values(i, j);
    loss += a * sample.log_prob[j] - aggregate(column, config_.schedule, n).value;
    const std::vector<double> w = aggregate_weights(column, config_.schedule, n);
    for (int i = 0; i < k; ++i) dqe_da.col(j) += w[i] * dq_da[i].col(j);
  }
  loss /= static_cast<double>(b);

  // head gradients; clamp gates zero the blocked paths
  Matrix dy(2 * d, b);
  for (Eigen::Index j = 0; j < b; ++j)
    for (int i = 0; i < d; ++i) {
      const double u = sample.u(i, j);
      const double th = std::tanh(u);
      const double sech2 = 1.0 - th * th;
      const bool u_active = std::abs(sample.u_raw(i, j)) < GaussianPolicy::kPreSquashLimit;
      const bool l_active = sample.logstd_raw(i, j) > GaussianPolicy::kLogStdMin &&
                            sample.logstd_raw(i, j) < GaussianPolicy::kLogStdMax;
      const double g_u = a * 2.0 * th - dqe_da(i, j) * sech2;
      const double g_mean = u_active ? g_u : 0.0;
      double g_logstd =
          (u_active ? g_u * std::exp(sample.logstd(i, j)) * sample.eps(i, j) : 0.0) - a;
      if (!l_active) g_logstd = 0.0;
      dy(i, j) = g_mean / static_cast<double>(b);
      dy(d + i, j) = g_logstd / static_cast<double>(b);
    }

  policy_.trunk().forward_batch(s);
  actor_adam_.step(policy_.trunk(), policy_.trunk().backward(dy));
  return loss;
}

double SacAgent::temperature_update(const std::vector<Transition>& batch, Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("temperature_update: empty batch");
  const Matrix s = gather_obs(batch, false);
  const GaussianPolicy::BatchSample sample = policy_.sample_batch(s, rng);
  double mean_term = 0.0;
  for (double lp : sample.log_prob) mean_term += lp + target_entropy();
  mean_term /= static_cast<double>(sample.log_prob.size());
  const double a = alpha();
  const double loss = -a * mean_term;
  log_alpha_ = alpha_adam_.step(log_alpha_, -a * mean_term);
  return loss;
}

std::string SacAgent::fingerprint() const {
  std::ostringstream out;
  save(out);
  return out.str();
}

void SacAgent::save(std::ostream& out) const {
  out << "sac_agent 1\n";
  out << "config " << config_.obs_dim << ' ' << config_.action_dim << ' ' << config_.k << ' '
      << (config_.diversity ? 1 : 0) << ' ' << config_.target_update_interval << ' '
      << config_.hidden.size();
  for (int h : config_.hidden) out << ' ' << h;
  out << '\n';
  out << "schedule " << to_string(config_.schedule.mode) << ' '
      << config_.schedule.total_iterations << '\n';
  write_hex_line(out, "beta0", config_.schedule.beta0);
  write_hex_line(out, "beta_min", config_.schedule.beta_min);
  write_hex_line(out, "lambda", config_.schedule.lambda);
  write_hex_line(out, "gamma", config_.gamma);
  write_hex_line(out, "tau", config_.tau);
  write_hex_line(out, "lr_critic", config_.lr_critic);
  write_hex_line(out, "lr_actor", config_.lr_actor);
  write_hex_line(out, "lr_alpha", config_.lr_alpha);
  write_hex_line(out, "initial_alpha", config_.initial_alpha);
  write_hex_line(out, "log_alpha", log_alpha_);
  out << "critic_updates " << critic_updates_ << '\n';
  policy_.trunk().save(out);
  actor_adam_.save(out);
  for (int i = 0; i < critics_.size(); ++i) {
    out << "tag " << to_string(critics_.tag(i)) << '\n';
    critics_.online(i).save(out);
    critics_.target(i).save(out);
    critics_.adam_[i].save(out);
  }
  alpha_adam_.save(out);
}

SacAgent SacAgent::load(std::istream& in) {
  std::string tok;
  if (!(in >> tok) || tok != "sac_agent")
    throw std::runtime_error("agent checkpoint: bad header");
  int version = 0;
  in >> version;
  if (version != 1) throw std::runtime_error("agent checkpoint: unsupported version");
  SacAgent agent;
  AgentConfig& c = agent.config_;
  if (!(in >> tok) || tok != "config") throw std::runtime_error("agent checkpoint: missing config");
  int diversity = 0;
  std::size_t hidden_count = 0;
  in >> c.obs_dim >> c.action_dim >> c.k >> diversity >> c.target_update_interval >> hidden_count;
  c.diversity = diversity != 0;
  c.hidden.resize(hidden_count);
  for (std::size_t i = 0; i < hidden_count; ++i) in >> c.hidden[i];
  if (!(in >> tok) || tok != "schedule")
    throw std::runtime_error("agent checkpoint: missing schedule");
  in >> tok;
  c.schedule.mode = aggregation_mode_from_string(tok);
  in >> c.schedule.total_iterations;
  c.schedule.beta0 = read_hex_tagged(in, "beta0");
  c.schedule.beta_min = read_hex_tagged(in, "beta_min");
  c.schedule.lambda = read_hex_tagged(in, "lambda");
  c.gamma = read_hex_tagged(in, "gamma");
  c.tau = read_hex_tagged(in, "tau");
  c.lr_critic = read_hex_tagged(in, "lr_critic");
  c.lr_actor = read_hex_tagged(in, "lr_actor");
  c.lr_alpha = read_hex_tagged(in, "lr_alpha");
  c.initial_alpha = read_hex_tagged(in, "initial_alpha");
  const double log_alpha = read_hex_tagged(in, "log_alpha");
  if (!(in >> tok) || tok != "critic_updates")
    throw std::runtime_error("agent checkpoint: missing critic_updates");
  in >> agent.critic_updates_;

  agent.policy_ = GaussianPolicy(Mlp::load(in), c.action_dim);
  agent.actor_adam_ = AdamState::load(in, agent.policy_.trunk());
  agent.critics_ = EnsembleCritic();
  for (int i = 0; i < c.k; ++i) {
    if (!(in >> tok) || tok != "tag") throw std::runtime_error("agent checkpoint: missing tag");
    in >> tok;
    agent.critics_.tags_.push_back(activation_from_string(tok));
    agent.critics_.online_.push_back(Mlp::load(in));
    agent.critics_.target_.push_back(Mlp::load(in));
    agent.critics_.adam_.push_back(AdamState::load(in, agent.critics_.online_.back()));
  }
  agent.alpha_adam_ = ScalarAdam::load(in);
  agent.log_alpha_ = log_alpha;
  if (agent.critics_.online_.front().input_dim() != c.obs_dim + c.action_dim)
    throw std::runtime_error("agent checkpoint: critic dimensions inconsistent with config");
  return agent;
}

SacAgent make_variant(const std::string& name, AgentConfig base, Rng& rng) {
  base.schedule.mode = variant_mode(name);
  if (name == "no_ensemble") {
    base.k = 2;
    base.diversity = false;
  } else if (name == "no_diversity") {
    base.diversity = false;
  }
  return SacAgent(std::move(base), rng);
}

AggregationMode variant_mode(const std::string& name) {
  if (name == "full") return AggregationMode::kTduExponential;
  if (name == "no_ensemble") return AggregationMode::kMinOfAll;
  if (name == "no_tdu") return AggregationMode::kMinOfAll;
  if (name == "no_diversity") return AggregationMode::kTduExponential;
  if (name == "pessimism_dec") return AggregationMode::kPessimismDec;
  if (name == "pessimism_inc") return AggregationMode::kPessimismInc;
  if (name == "pessimism_min") return AggregationMode::kPessimismMin;
  throw std::invalid_argument("unknown agent variant '" + name + "'");
}

}  // namespace uacer
