#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "uacer/rng.hpp"

namespace uacer {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Activation { kIdentity, kRelu, kLeakyRelu, kElu };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& name);

double activate(Activation a, double z);
// Derivative w.r.t. the pre-activation. ReLU subgradient at 0 is 0.
double activate_grad(Activation a, double z);

struct LayerGrads {
  Matrix dw;
  Vector db;
};

struct MlpGradients {
  std::vector<LayerGrads> layers;
  Matrix dx;  // gradient w.r.t. the input batch (columns = samples)
};

// Fully-connected net, 64-bit throughout. Batches are laid out features x
// samples (one column per sample) to match Eigen's column-major storage.
//
// Concurrency: forward()/forward_batch() cache intermediate values for
// backward() and therefore mutate the instance; evaluate()/evaluate_batch()
// are const and safe to call from several threads at once. Parameter updates
// require exclusive access.
class Mlp {
 public:
  // dims = [in, hidden..., out]; one activation per affine layer
  // (dims.size() - 1 of them), the last normally kIdentity.
  Mlp(std::vector<int> dims, std::vector<Activation> activations);

  // Gaussian init, std = 1/sqrt(fan_in), biases zero. When noise_std > 0 an
  // extra N(0, noise_std^2) draw is added per parameter (diversity noise).
  static Mlp random(std::vector<int> dims, std::vector<Activation> activations,
                    Rng& rng, double noise_std = 0.0);

  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  int layer_count() const { return static_cast<int>(weights_.size()); }
  const std::vector<int>& dims() const { return dims_; }
  Activation activation(int layer) const { return activations_[layer]; }

  Matrix& weights(int layer) { return weights_[layer]; }
  const Matrix& weights(int layer) const { return weights_[layer]; }
  Vector& bias(int layer) { return biases_[layer]; }
  const Vector& bias(int layer) const { return biases_[layer]; }

  // Caching forward passes (training path).
  Vector forward(const Vector& x);
  Matrix forward_batch(const Matrix& x);

  // Uncached, const (evaluation path).
  Vector evaluate(const Vector& x) const;
  Matrix evaluate_batch(const Matrix& x) const;

  // Backpropagates dL/dy for the cached batch. dy must be out_dim x batch;
  // gradients are sums over the batch (caller scales dy for means).
  MlpGradients backward(const Matrix& dy) const;
  bool has_cached_forward() const { return cached_; }

  // Structured-text checkpoint, hexfloat payload: exact round-trip.
  void save(std::ostream& out) const;
  static Mlp load(std::istream& in);

 private:
  std::vector<int> dims_;
  std::vector<Activation> activations_;
  std::vector<Matrix> weights_;  // out x in per layer
  std::vector<Vector> biases_;

  bool cached_ = false;
  Matrix cache_input_;
  std::vector<Matrix> cache_pre_;   // pre-activations per layer
  std::vector<Matrix> cache_post_;  // activated outputs per layer
};

// target <- (1 - tau) * target + tau * online, parameter-wise.
void polyak_update(Mlp& target, const Mlp& online, double tau);

// Adam with bias correction (beta1 0.9, beta2 0.999, eps 1e-8). Moment
// buffers are allocated to match the given net and shape-checked per step.
class AdamState {
 public:
  AdamState(const Mlp& net, double lr);

  void step(Mlp& net, const MlpGradients& grads);
  std::int64_t step_count() const { return step_; }
  double learning_rate() const { return lr_; }

  void save(std::ostream& out) const;
  static AdamState load(std::istream& in, const Mlp& net);

 private:
  double lr_;
  std::int64_t step_ = 0;
  std::vector<Matrix> mw_, vw_;
  std::vector<Vector> mb_, vb_;
};

// Same recurrence for a single scalar parameter (temperature's log alpha).
class ScalarAdam {
 public:
  explicit ScalarAdam(double lr) : lr_(lr) {}

  double step(double param, double grad);
  std::int64_t step_count() const { return step_; }

  void save(std::ostream& out) const;
  static ScalarAdam load(std::istream& in);

 private:
  double lr_;
  std::int64_t step_ = 0;
  double m_ = 0.0, v_ = 0.0;
};

}  // namespace uacer
