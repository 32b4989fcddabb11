#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace pih {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// tanh through the vectorized exp; Eigen's double tanh is scalar. Absolute error ~1e-16.
inline MatrixXd fast_tanh(const MatrixXd& z) { return (1.0 - 2.0 / ((2.0 * z.array()).exp() + 1.0)).matrix(); }

/// Activations kept from a forward pass; consumed by backward.
struct ForwardCache {
  std::vector<MatrixXd> inputs;       // input to each layer, (in x batch)
  std::vector<MatrixXd> activations;  // tanh output of each hidden layer
  bool valid() const { return !inputs.empty(); }
};

/// Gradient accumulators shaped like an Mlp's parameters.
struct GradientTape {
  std::vector<MatrixXd> dW;
  std::vector<VectorXd> db;

  void zero() {
    for (auto& w : dW) w.setZero();
    for (auto& b : db) b.setZero();
  }
};

/// Fully connected net: tanh on hidden layers, linear output head.
class Mlp {
 public:
  Mlp() = default;

  explicit Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw std::invalid_argument("Mlp needs at least input and output sizes");
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      if (sizes_[l] < 1 || sizes_[l + 1] < 1) throw std::invalid_argument("Mlp layer sizes must be positive");
      weights_.push_back(MatrixXd::Zero(sizes_[l + 1], sizes_[l]));
      biases_.push_back(VectorXd::Zero(sizes_[l + 1]));
    }
  }

  const std::vector<int>& sizes() const { return sizes_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  int num_layers() const { return static_cast<int>(weights_.size()); }

  MatrixXd& weight(int l) { return weights_.at(l); }
  const MatrixXd& weight(int l) const { return weights_.at(l); }
  VectorXd& bias(int l) { return biases_.at(l); }
  const VectorXd& bias(int l) const { return biases_.at(l); }

  std::size_t num_params() const {
    std::size_t n = 0;
    for (int l = 0; l < num_layers(); ++l) n += weights_[l].size() + biases_[l].size();
    return n;
  }

  /// Orthogonal init with gain sqrt(2) on hidden layers and `head_gain` on the output layer.
  template <typename Rng>
  void init_orthogonal(Rng& rng, double head_gain) {
    std::normal_distribution<double> n01(0.0, 1.0);
    for (int l = 0; l < num_layers(); ++l) {
      const int rows = static_cast<int>(weights_[l].rows()), cols = static_cast<int>(weights_[l].cols());
      const int big = std::max(rows, cols), small = std::min(rows, cols);
      MatrixXd g(big, small);
      for (int i = 0; i < g.size(); ++i) g.data()[i] = n01(rng);
      Eigen::HouseholderQR<MatrixXd> qr(g);
      MatrixXd q = qr.householderQ() * MatrixXd::Identity(big, small);
      // Sign fix makes the decomposition unique.
      const MatrixXd r = qr.matrixQR().topLeftCorner(small, small);
      for (int j = 0; j < small; ++j)
        if (r(j, j) < 0) q.col(j) *= -1.0;
      const double gain = (l + 1 == num_layers()) ? head_gain : std::numbers::sqrt2;
      weights_[l] = gain * (rows >= cols ? q : MatrixXd(q.transpose()));
      biases_[l].setZero();
    }
  }

  VectorXd forward(const VectorXd& x) const { return forward_batch(x, nullptr); }

  /// Columns of `x` are samples.
  MatrixXd forward_batch(const MatrixXd& x, ForwardCache* cache) const {
    if (x.rows() != input_size())
      throw std::invalid_argument("Mlp::forward: input has " + std::to_string(x.rows()) + " rows, expected " +
                                  std::to_string(input_size()));
    if (cache) {
      cache->inputs.clear();
      cache->activations.clear();
    }
    MatrixXd h = x;
    for (int l = 0; l < num_layers(); ++l) {
      if (cache) cache->inputs.push_back(h);
      MatrixXd z = weights_[l] * h;
      z.colwise() += biases_[l];
      if (l + 1 < num_layers()) {
        h = fast_tanh(z);
        if (cache) cache->activations.push_back(h);
      } else {
        h = std::move(z);
      }
    }
    return h;
  }

  GradientTape make_tape() const {
    GradientTape t;
    for (int l = 0; l < num_layers(); ++l) {
      t.dW.push_back(MatrixXd::Zero(weights_[l].rows(), weights_[l].cols()));
      t.db.push_back(VectorXd::Zero(biases_[l].size()));
    }
    return t;
  }

  /// Accumulates d(sum upstream . output)/d(params) into `tape` and returns the gradient
  /// w.r.t. the input. `upstream` is (output x batch).
  MatrixXd backward(const ForwardCache& cache, const MatrixXd& upstream, GradientTape& tape) const {
    if (!cache.valid()) throw std::logic_error("Mlp::backward called before forward");
    if (static_cast<int>(tape.dW.size()) != num_layers()) throw std::invalid_argument("Mlp::backward: tape shape");
    if (upstream.rows() != output_size() || upstream.cols() != cache.inputs.front().cols())
      throw std::invalid_argument("Mlp::backward: upstream shape mismatch");
    MatrixXd delta = upstream;
    for (int l = num_layers() - 1; l >= 0; --l) {
      if (l + 1 < num_layers()) {
        const MatrixXd& a = cache.activations[l];
        delta = (delta.array() * (derivative_sign_ * (1.0 - a.array().square()))).matrix();
      }
      tape.dW[l].noalias() += delta * cache.inputs[l].transpose();
      tape.db[l] += delta.rowwise().sum();
      delta = weights_[l].transpose() * delta;
    }
    return delta;
  }

  /// Fault injection for the gradient checker: negates the tanh derivative in backward.
  void set_flipped_derivative(bool flipped) { derivative_sign_ = flipped ? -1.0 : 1.0; }

  /// Parameters flattened layer by layer as (W column-major, b).
  VectorXd flat_params() const {
    VectorXd p(num_params());
    std::size_t k = 0;
    for (int l = 0; l < num_layers(); ++l) {
      p.segment(k, weights_[l].size()) = Eigen::Map<const VectorXd>(weights_[l].data(), weights_[l].size());
      k += weights_[l].size();
      p.segment(k, biases_[l].size()) = biases_[l];
      k += biases_[l].size();
    }
    return p;
  }

  void set_flat_params(const VectorXd& p) {
    if (static_cast<std::size_t>(p.size()) != num_params()) throw std::invalid_argument("Mlp: flat parameter size");
    std::size_t k = 0;
    for (int l = 0; l < num_layers(); ++l) {
      Eigen::Map<VectorXd>(weights_[l].data(), weights_[l].size()) = p.segment(k, weights_[l].size());
      k += weights_[l].size();
      biases_[l] = p.segment(k, biases_[l].size());
      k += biases_[l].size();
    }
  }

  static VectorXd flatten(const GradientTape& t) {
    std::size_t n = 0;
    for (std::size_t l = 0; l < t.dW.size(); ++l) n += t.dW[l].size() + t.db[l].size();
    VectorXd g(n);
    std::size_t k = 0;
    for (std::size_t l = 0; l < t.dW.size(); ++l) {
      g.segment(k, t.dW[l].size()) = Eigen::Map<const VectorXd>(t.dW[l].data(), t.dW[l].size());
      k += t.dW[l].size();
      g.segment(k, t.db[l].size()) = t.db[l];
      k += t.db[l].size();
    }
    return g;
  }

 private:
  std::vector<int> sizes_;
  std::vector<MatrixXd> weights_;
  std::vector<VectorXd> biases_;
  double derivative_sign_ = 1.0;
};

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;
inline const double kLogTwoPi = std::log(2.0 * std::numbers::pi);

/// Diagonal Gaussian over actions with a state-independent log standard deviation.
class GaussianPolicy {
 public:
  GaussianPolicy() = default;
  GaussianPolicy(int obs_dim, int act_dim, int hidden = 64)
      : trunk_({obs_dim, hidden, hidden, act_dim}), log_std_(VectorXd::Constant(act_dim, -0.5)) {}

  template <typename Rng>
  void init(Rng& rng) {
    trunk_.init_orthogonal(rng, 0.01);
    log_std_.setConstant(-0.5);
  }

  Mlp& trunk() { return trunk_; }
  const Mlp& trunk() const { return trunk_; }
  VectorXd& log_std() { return log_std_; }
  const VectorXd& log_std() const { return log_std_; }
  int act_dim() const { return trunk_.output_size(); }
  int obs_dim() const { return trunk_.input_size(); }

  void clamp_log_std() { log_std_ = log_std_.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax); }

  VectorXd mean(const VectorXd& obs) const { return trunk_.forward(obs); }

  /// Log density of `actions` (columns) given `means` (columns).
  VectorXd log_prob_batch(const MatrixXd& means, const MatrixXd& actions) const {
    const VectorXd inv_var = (-2.0 * log_std_).array().exp();
    const MatrixXd diff = actions - means;
    VectorXd quad = (diff.array().square().colwise() * inv_var.array()).colwise().sum().transpose();
    const double norm = log_std_.sum() + 0.5 * act_dim() * kLogTwoPi;
    return (-0.5 * quad.array() - norm).matrix();
  }

  double log_prob(const VectorXd& obs, const VectorXd& action) const {
    return log_prob_batch(mean(obs), action)(0);
  }

  double entropy() const { return log_std_.sum() + 0.5 * act_dim() * (1.0 + kLogTwoPi); }

  struct Sample {
    VectorXd action;    // clamped into [-1, 1]
    VectorXd raw;       // pre-clamp draw
    double log_prob = 0.0;  // density of the pre-clamp draw
  };

  /// Draws from N(mean, sigma^2), clamps to [-1,1]; log_prob is of the pre-clamp draw.
  template <typename Rng>
  Sample sample_from_mean(const VectorXd& mu, Rng& rng) const {
    std::normal_distribution<double> n01(0.0, 1.0);
    Sample s;
    s.raw.resize(act_dim());
    for (int i = 0; i < act_dim(); ++i) s.raw[i] = mu[i] + std::exp(log_std_[i]) * n01(rng);
    s.action = s.raw.cwiseMax(-1.0).cwiseMin(1.0);
    s.log_prob = log_prob_batch(mu, s.raw)(0);
    return s;
  }

  template <typename Rng>
  Sample sample(const VectorXd& obs, Rng& rng) const {
    return sample_from_mean(mean(obs), rng);
  }

  std::size_t num_params() const { return trunk_.num_params() + log_std_.size(); }

  VectorXd flat_params() const {
    VectorXd p(num_params());
    p << trunk_.flat_params(), log_std_;
    return p;
  }

  void set_flat_params(const VectorXd& p) {
    if (static_cast<std::size_t>(p.size()) != num_params()) throw std::invalid_argument("policy: flat parameter size");
    trunk_.set_flat_params(p.head(trunk_.num_params()));
    log_std_ = p.tail(log_std_.size());
  }

 private:
  Mlp trunk_;
  VectorXd log_std_;
};

class ValueNet {
 public:
  ValueNet() = default;
  /// The network predicts V / output_scale, keeping large returns within reach of its output layer.
  explicit ValueNet(int obs_dim, int hidden = 64, double output_scale = 1.0)
      : net_({obs_dim, hidden, hidden, 1}), scale_(output_scale) {
    if (!(output_scale > 0.0)) throw std::invalid_argument("ValueNet: output_scale must be > 0");
  }

  template <typename Rng>
  void init(Rng& rng) {
    net_.init_orthogonal(rng, 1.0);
  }

  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }

  double output_scale() const { return scale_; }

  double value(const VectorXd& obs) const { return scale_ * net_.forward(obs)(0); }

  /// 1 x B row of values for the columns of `obs`.
  MatrixXd value_batch(const MatrixXd& obs, ForwardCache* cache) const { return scale_ * net_.forward_batch(obs, cache); }

  /// Accumulates d(loss)/d(params) given d(loss)/d(value).
  void backward(const ForwardCache& cache, const MatrixXd& upstream, GradientTape& tape) const {
    net_.backward(cache, scale_ * upstream, tape);
  }

 private:
  Mlp net_;
  double scale_ = 1.0;
};

/// Adam with bias correction.
struct AdamState {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  VectorXd m;
  VectorXd v;
};

inline void adam_step(AdamState& s, VectorXd& params, const VectorXd& grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: params/grads size mismatch");
  if (s.m.size() == 0) {
    s.m = VectorXd::Zero(params.size());
    s.v = VectorXd::Zero(params.size());
  }
  if (s.m.size() != params.size()) throw std::invalid_argument("adam_step: state/params size mismatch");
  ++s.step;
  s.m = s.beta1 * s.m + (1.0 - s.beta1) * grads;
  s.v = s.beta2 * s.v + (1.0 - s.beta2) * grads.cwiseProduct(grads);
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  params.array() -= s.lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + s.eps);
}

}  // namespace pih
