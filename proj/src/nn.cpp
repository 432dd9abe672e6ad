#include "uacer/nn.hpp"

#include <cmath>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace uacer {
namespace {

void write_hex(std::ostream& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%a", v);
  out << buf;
}

double read_hex(std::istream& in, const char* what) {
  std::string tok;
  if (!(in >> tok)) throw std::runtime_error(std::string("checkpoint truncated reading ") + what);
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0')
    throw std::runtime_error("checkpoint: bad numeric token '" + tok + "' in " + what);
  return v;
}

void expect_tag(std::istream& in, const std::string& want) {
  std::string tok;
  if (!(in >> tok) || tok != want)
    throw std::runtime_error("checkpoint: expected '" + want + "', got '" + tok + "'");
}

}  // namespace

const char* to_string(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kRelu: return "relu";
    case Activation::kLeakyRelu: return "leaky_relu";
    case Activation::kElu: return "elu";
  }
  return "?";
}

Activation activation_from_string(const std::string& name) {
  if (name == "identity") return Activation::kIdentity;
  if (name == "relu") return Activation::kRelu;
  if (name == "leaky_relu") return Activation::kLeakyRelu;
  if (name == "elu") return Activation::kElu;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

double activate(Activation a, double z) {
  switch (a) {
    case Activation::kIdentity: return z;
    case Activation::kRelu: return z > 0.0 ? z : 0.0;
    case Activation::kLeakyRelu: return z > 0.0 ? z : 0.01 * z;
    case Activation::kElu: return z > 0.0 ? z : std::expm1(z);
  }
  return z;
}

double activate_grad(Activation a, double z) {
  switch (a) {
    case Activation::kIdentity: return 1.0;
    case Activation::kRelu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::kLeakyRelu: return z > 0.0 ? 1.0 : 0.01;
    case Activation::kElu: return z > 0.0 ? 1.0 : std::exp(z);
  }
  return 1.0;
}

Mlp::Mlp(std::vector<int> dims, std::vector<Activation> activations)
    : dims_(std::move(dims)), activations_(std::move(activations)) {
  if (dims_.size() < 2) throw std::invalid_argument("Mlp needs at least input and output dims");
  for (int d : dims_)
    if (d <= 0) throw std::invalid_argument("Mlp layer dims must be positive");
  if (activations_.size() != dims_.size() - 1)
    throw std::invalid_argument("Mlp needs one activation per affine layer");
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    weights_.emplace_back(Matrix::Zero(dims_[l + 1], dims_[l]));
    biases_.emplace_back(Vector::Zero(dims_[l + 1]));
  }
}

Mlp Mlp::random(std::vector<int> dims, std::vector<Activation> activations, Rng& rng,
                double noise_std) {
  Mlp net(std::move(dims), std::move(activations));
  for (int l = 0; l < net.layer_count(); ++l) {
    Matrix& w = net.weights_[l];
    Vector& b = net.biases_[l];
    const double std = 1.0 / std::sqrt(static_cast<double>(w.cols()));
    // Row-major draw order fixes the stream layout independent of Eigen's
    // storage order.
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        double v = rng.normal(0.0, std);
        if (noise_std > 0.0) v += rng.normal(0.0, noise_std);
        w(i, j) = v;
      }
    for (Eigen::Index i = 0; i < b.size(); ++i)
      b(i) = noise_std > 0.0 ? rng.normal(0.0, noise_std) : 0.0;
  }
  return net;
}

Matrix Mlp::forward_batch(const Matrix& x) {
  if (x.rows() != input_dim())
    throw std::invalid_argument("Mlp::forward: input has " + std::to_string(x.rows()) +
                                " features, expected " + std::to_string(input_dim()));
  cache_input_ = x;
  cache_pre_.assign(weights_.size(), Matrix());
  cache_post_.assign(weights_.size(), Matrix());
  const Matrix* h = &cache_input_;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    cache_pre_[l].noalias() = weights_[l] * (*h);
    cache_pre_[l].colwise() += biases_[l];
    cache_post_[l] = cache_pre_[l].unaryExpr(
        [a = activations_[l]](double z) { return activate(a, z); });
    h = &cache_post_[l];
  }
  cached_ = true;
  return cache_post_.back();
}

Vector Mlp::forward(const Vector& x) { return forward_batch(x).col(0); }

Matrix Mlp::evaluate_batch(const Matrix& x) const {
  if (x.rows() != input_dim())
    throw std::invalid_argument("Mlp::evaluate: input has " + std::to_string(x.rows()) +
                                " features, expected " + std::to_string(input_dim()));
  Matrix h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Matrix z = weights_[l] * h;
    z.colwise() += biases_[l];
    h = z.unaryExpr([a = activations_[l]](double v) { return activate(a, v); });
  }
  return h;
}

Vector Mlp::evaluate(const Vector& x) const { return evaluate_batch(x).col(0); }

MlpGradients Mlp::backward(const Matrix& dy) const {
  if (!cached_) throw std::logic_error("Mlp::backward called without a cached forward pass");
  if (dy.rows() != output_dim() || dy.cols() != cache_input_.cols())
    throw std::invalid_argument("Mlp::backward: output-gradient shape mismatch");
  MlpGradients g;
  g.layers.resize(weights_.size());
  Matrix delta = dy.cwiseProduct(cache_pre_.back().unaryExpr(
      [a = activations_.back()](double z) { return activate_grad(a, z); }));
  for (int l = layer_count() - 1; l >= 0; --l) {
    const Matrix& below = l == 0 ? cache_input_ : cache_post_[l - 1];
    g.layers[l].dw.noalias() = delta * below.transpose();
    g.layers[l].db = delta.rowwise().sum();
    Matrix dprev;
    dprev.noalias() = weights_[l].transpose() * delta;
    if (l == 0) {
      g.dx = std::move(dprev);
    } else {
      delta = dprev.cwiseProduct(cache_pre_[l - 1].unaryExpr(
          [a = activations_[l - 1]](double z) { return activate_grad(a, z); }));
    }
  }
  return g;
}

void Mlp::save(std::ostream& out) const {
  out << "mlp 1\n";
  out << "dims";
  for (int d : dims_) out << ' ' << d;
  out << "\nactivations";
  for (Activation a : activations_) out << ' ' << to_string(a);
  out << '\n';
  for (int l = 0; l < layer_count(); ++l) {
    out << "layer " << l << "\nweights";
    const Matrix& w = weights_[l];
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        out << ' ';
        write_hex(out, w(i, j));
      }
    out << "\nbias";
    for (Eigen::Index i = 0; i < biases_[l].size(); ++i) {
      out << ' ';
      write_hex(out, biases_[l](i));
    }
    out << '\n';
  }
  out << "end\n";
}

Mlp Mlp::load(std::istream& in) {
  expect_tag(in, "mlp");
  int version = 0;
  if (!(in >> version) || version != 1) throw std::runtime_error("checkpoint: unsupported mlp version");
  expect_tag(in, "dims");
  std::vector<int> dims;
  {
    // dims run until the "activations" tag; peek token-wise
    std::string tok;
    while (in >> tok) {
      if (tok == "activations") break;
      dims.push_back(std::stoi(tok));
    }
  }
  std::vector<Activation> acts;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    std::string tok;
    if (!(in >> tok)) throw std::runtime_error("checkpoint truncated reading activations");
    acts.push_back(activation_from_string(tok));
  }
  Mlp net(dims, acts);
  for (int l = 0; l < net.layer_count(); ++l) {
    expect_tag(in, "layer");
    int idx = -1;
    in >> idx;
    if (idx != l) throw std::runtime_error("checkpoint: layer index out of order");
    expect_tag(in, "weights");
    Matrix& w = net.weights_[l];
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = read_hex(in, "weights");
    expect_tag(in, "bias");
    for (Eigen::Index i = 0; i < net.biases_[l].size(); ++i)
      net.biases_[l](i) = read_hex(in, "bias");
  }
  expect_tag(in, "end");
  return net;
}

void polyak_update(Mlp& target, const Mlp& online, double tau) {
  if (target.dims() != online.dims())
    throw std::invalid_argument("polyak_update: mismatched architectures");
  for (int l = 0; l < target.layer_count(); ++l) {
    target.weights(l) = (1.0 - tau) * target.weights(l) + tau * online.weights(l);
    target.bias(l) = (1.0 - tau) * target.bias(l) + tau * online.bias(l);
  }
}

AdamState::AdamState(const Mlp& net, double lr) : lr_(lr) {
  for (int l = 0; l < net.layer_count(); ++l) {
    mw_.push_back(Matrix::Zero(net.weights(l).rows(), net.weights(l).cols()));
    vw_.push_back(Matrix::Zero(net.weights(l).rows(), net.weights(l).cols()));
    mb_.push_back(Vector::Zero(net.bias(l).size()));
    vb_.push_back(Vector::Zero(net.bias(l).size()));
  }
}

void AdamState::step(Mlp& net, const MlpGradients& grads) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  if (grads.layers.size() != mw_.size())
    throw std::invalid_argument("AdamState::step: gradient layer count mismatch");
  for (std::size_t l = 0; l < mw_.size(); ++l) {
    const LayerGrads& g = grads.layers[l];
    if (g.dw.rows() != mw_[l].rows() || g.dw.cols() != mw_[l].cols() ||
        g.db.size() != mb_[l].size())
      throw std::invalid_argument("AdamState::step: gradient shape mismatch at layer " +
                                  std::to_string(l));
    if (!g.dw.allFinite())
      throw std::domain_error("non-finite gradient in layer " + std::to_string(l) + " weights");
    if (!g.db.allFinite())
      throw std::domain_error("non-finite gradient in layer " + std::to_string(l) + " bias");
  }
  ++step_;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step_));
  for (std::size_t l = 0; l < mw_.size(); ++l) {
    const LayerGrads& g = grads.layers[l];
    mw_[l] = kBeta1 * mw_[l] + (1.0 - kBeta1) * g.dw;
    vw_[l] = kBeta2 * vw_[l] + (1.0 - kBeta2) * g.dw.cwiseProduct(g.dw);
    net.weights(l).array() -=
        lr_ * (mw_[l] / c1).array() / ((vw_[l] / c2).array().sqrt() + kEps);
    mb_[l] = kBeta1 * mb_[l] + (1.0 - kBeta1) * g.db;
    vb_[l] = kBeta2 * vb_[l] + (1.0 - kBeta2) * g.db.cwiseProduct(g.db);
    net.bias(l).array() -= lr_ * (mb_[l] / c1).array() / ((vb_[l] / c2).array().sqrt() + kEps);
  }
}

void AdamState::save(std::ostream& out) const {
  out << "adam 1 " << step_ << ' ';
  write_hex(out, lr_);
  out << '\n';
  for (std::size_t l = 0; l < mw_.size(); ++l) {
    for (const Matrix* m : {&mw_[l], &vw_[l]}) {
      for (Eigen::Index i = 0; i < m->rows(); ++i)
        for (Eigen::Index j = 0; j < m->cols(); ++j) {
          write_hex(out, (*m)(i, j));
          out << ' ';
        }
    }
    for (const Vector* v : {&mb_[l], &vb_[l]}) {
      for (Eigen::Index i = 0; i < v->size(); ++i) {
        write_hex(out, (*v)(i));
        out << ' ';
      }
    }
    out << '\n';
  }
}

AdamState AdamState::load(std::istream& in, const Mlp& net) {
  expect_tag(in, "adam");
  int version = 0;
  in >> version;
  if (version != 1) throw std::runtime_error("checkpoint: unsupported adam version");
  std::int64_t step = 0;
  in >> step;
  const double lr = read_hex(in, "adam lr");
  AdamState st(net, lr);
  st.step_ = step;
  for (std::size_t l = 0; l < st.mw_.size(); ++l) {
    for (Matrix* m : {&st.mw_[l], &st.vw_[l]})
      for (Eigen::Index i = 0; i < m->rows(); ++i)
        for (Eigen::Index j = 0; j < m->cols(); ++j) (*m)(i, j) = read_hex(in, "adam moment");
    for (Vector* v : {&st.mb_[l], &st.vb_[l]})
      for (Eigen::Index i = 0; i < v->size(); ++i) (*v)(i) = read_hex(in, "adam moment");
  }
  return st;
}

double ScalarAdam::step(double param, double grad) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  if (!std::isfinite(grad)) throw std::domain_error("non-finite gradient in scalar parameter");
  ++step_;
  m_ = kBeta1 * m_ + (1.0 - kBeta1) * grad;
  v_ = kBeta2 * v_ + (1.0 - kBeta2) * grad * grad;
  const double mhat = m_ / (1.0 - std::pow(kBeta1, static_cast<double>(step_)));
  const double vhat = v_ / (1.0 - std::pow(kBeta2, static_cast<double>(step_)));
  return param - lr_ * mhat / (std::sqrt(vhat) + kEps);
}

void ScalarAdam::save(std::ostream& out) const {
  out << "scalar_adam 1 " << step_ << ' ';
  write_hex(out, lr_);
  out << ' ';
  write_hex(out, m_);
  out << ' ';
  write_hex(out, v_);
  out << '\n';
}

ScalarAdam ScalarAdam::load(std::istream& in) {
  expect_tag(in, "scalar_adam");
  int version = 0;
  in >> version;
  if (version != 1) throw std::runtime_error("checkpoint: unsupported scalar_adam version");
  std::int64_t step = 0;
  in >> step;
  ScalarAdam st(read_hex(in, "scalar_adam lr"));
  st.step_ = step;
  st.m_ = read_hex(in, "scalar_adam m");
  st.v_ = read_hex(in, "scalar_adam v");
  return st;
}

}  // namespace uacer
