#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "nfqe/errors.hpp"
#include "nfqe/rng.hpp"

namespace nfqe {

/**
 * Budget of the constrained ReLU class F(L, p, I, tau, V): depth, maximum hidden width,
 * total parameter count, entrywise weight/bias bound, and output sup-norm bound.
 */
struct NetworkClassParams {
  int depth = 2;            // L, counting the linear output layer
  int width = 16;           // p
  long long budget = 1000;  // I
  double weight_bound = 1.0;  // tau
  double output_bound = 1.0;  // V
  int input_dim = 1;

  /// Throws ConfigError unless every field is positive.
  void validate() const;
};

/// Multipliers for the O(.) terms of the sample-size schedule.
struct ScheduleConstants {
  double depth = 1.0;
  double width = 1.0;
  double budget = 1.0;
};

/**
 * Class budget as a function of the sample size K:
 *   L = ceil(c_L ln K), p = ceil(c_p K^{d/(2 alpha + d)}), I = ceil(c_I K^{d/(2 alpha + d)} ln K),
 *   tau = max{B, H, sqrt(d), omega^2}, V = H.
 * Throws DomainError for K < 2 or non-positive alpha, d, constants.
 */
NetworkClassParams schedule_from_theorem(long long sample_count, double alpha, int intrinsic_dim, double bound,
                                         int horizon, double reach, int input_dim, const ScheduleConstants& c = {});

/// Parameter count of a dense net with the given hidden widths and a scalar output.
long long dense_parameter_count(int input_dim, const std::vector<int>& hidden_widths);

/// Hidden widths (L - 1 equal layers, at most p wide) shrunk until the dense count fits I.
/// Throws ConfigError when even width 1 exceeds the budget.
std::vector<int> architecture_for(const NetworkClassParams& params);

/**
 * f(x) = W_L ReLU(W_{L-1} ... ReLU(W_1 x + b_1) ... + b_{L-1}) + b_L, with output clamped to
 * [0, V]. Inputs are batched as columns of an (input_dim x N) matrix.
 */
template <typename Scalar>
class ReluNetwork {
 public:
  using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

  ReluNetwork() = default;

  /// All-zero network with the given hidden widths.
  ReluNetwork(const NetworkClassParams& params, const std::vector<int>& hidden_widths) : params_(params) {
    int fan_in = params.input_dim;
    for (int w : hidden_widths) {
      weights_.push_back(MatrixX::Zero(w, fan_in));
      biases_.push_back(VectorX::Zero(w));
      fan_in = w;
    }
    weights_.push_back(MatrixX::Zero(1, fan_in));
    biases_.push_back(VectorX::Zero(1));
  }

  const NetworkClassParams& params() const { return params_; }
  NetworkClassParams& params() { return params_; }

  int depth() const { return static_cast<int>(weights_.size()); }
  int input_dim() const { return static_cast<int>(weights_.front().cols()); }

  /// Input width followed by every layer's output width (the last is 1).
  std::vector<int> layer_widths() const {
    std::vector<int> out{input_dim()};
    for (const auto& w : weights_) out.push_back(static_cast<int>(w.rows()));
    return out;
  }

  long long parameter_count() const {
    long long n = 0;
    for (std::size_t i = 0; i < weights_.size(); ++i) n += weights_[i].size() + biases_[i].size();
    return n;
  }

  std::vector<MatrixX>& weights() { return weights_; }
  const std::vector<MatrixX>& weights() const { return weights_; }
  std::vector<VectorX>& biases() { return biases_; }
  const std::vector<VectorX>& biases() const { return biases_; }

  RowVectorX raw_output(const Eigen::Ref<const MatrixX>& inputs) const {
    check_input(inputs.rows());
    MatrixX act = inputs;
    for (std::size_t i = 0; i + 1 < weights_.size(); ++i) {
      act = ((weights_[i] * act).colwise() + biases_[i]).cwiseMax(Scalar(0));
    }
    return (weights_.back() * act).array() + biases_.back()[0];
  }

  RowVectorX output(const Eigen::Ref<const MatrixX>& inputs) const {
    return raw_output(inputs).cwiseMax(Scalar(0)).cwiseMin(Scalar(params_.output_bound));
  }

  Scalar raw_forward(const Eigen::Ref<const VectorX>& x) const { return raw_output(x)(0); }
  Scalar forward(const Eigen::Ref<const VectorX>& x) const { return output(x)(0); }

  template <typename Other>
  ReluNetwork<Other> cast() const {
    ReluNetwork<Other> out;
    out.params() = params_;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      out.weights().push_back(weights_[i].template cast<Other>());
      out.biases().push_back(biases_[i].template cast<Other>());
    }
    return out;
  }

  bool operator==(const ReluNetwork& other) const {
    if (weights_.size() != other.weights_.size()) return false;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      if (weights_[i].rows() != other.weights_[i].rows() || weights_[i].cols() != other.weights_[i].cols() ||
          weights_[i] != other.weights_[i] || biases_[i] != other.biases_[i]) {
        return false;
      }
    }
    return true;
  }

 private:
  void check_input(Eigen::Index rows) const {
    if (weights_.empty()) throw ConfigError("network has no layers");
    if (rows != weights_.front().cols()) throw ShapeError("network input dimension mismatch");
  }

  NetworkClassParams params_;
  std::vector<MatrixX> weights_;
  std::vector<VectorX> biases_;
};

using ReluNet = ReluNetwork<double>;

template <typename Scalar>
struct NetworkGradient {
  std::vector<typename ReluNetwork<Scalar>::MatrixX> weights;
  std::vector<typename ReluNetwork<Scalar>::VectorX> biases;
};

/**
 * Gradient of sum_i output_grad[i] * raw_f(x_i) with respect to every weight and bias
 * (reverse-mode through the ReLU layers; the clamp is not part of the differentiated map).
 */
template <typename Scalar>
NetworkGradient<Scalar> backward(const ReluNetwork<Scalar>& net,
                                 const Eigen::Ref<const typename ReluNetwork<Scalar>::MatrixX>& inputs,
                                 const Eigen::Ref<const typename ReluNetwork<Scalar>::RowVectorX>& output_grad) {
  using MatrixX = typename ReluNetwork<Scalar>::MatrixX;
  const auto& w = net.weights();
  const auto& b = net.biases();
  const std::size_t layers = w.size();
  if (inputs.rows() != net.input_dim()) throw ShapeError("network input dimension mismatch");
  if (output_grad.size() != inputs.cols()) throw ShapeError("output gradient length mismatch");

  std::vector<MatrixX> acts;  // acts[i] feeds layer i
  std::vector<MatrixX> pre;   // pre-activations of the hidden layers
  acts.reserve(layers);
  pre.reserve(layers);
  acts.emplace_back(inputs);
  for (std::size_t i = 0; i + 1 < layers; ++i) {
    pre.push_back((w[i] * acts.back()).colwise() + b[i]);
    acts.push_back(pre.back().cwiseMax(Scalar(0)));
  }

  NetworkGradient<Scalar> grad;
  grad.weights.resize(layers);
  grad.biases.resize(layers);
  MatrixX delta = output_grad;
  for (std::size_t i = layers; i-- > 0;) {
    grad.weights[i].noalias() = delta * acts[i].transpose();
    grad.biases[i] = delta.rowwise().sum();
    if (i > 0) {
      MatrixX back = w[i].transpose() * delta;
      delta = back.cwiseProduct((pre[i - 1].array() > Scalar(0)).matrix().template cast<Scalar>());
    }
  }
  return grad;
}

/// Mean squared error of the raw output against `targets` and its gradient.
template <typename Scalar>
std::pair<Scalar, NetworkGradient<Scalar>> squared_loss_gradient(
    const ReluNetwork<Scalar>& net, const Eigen::Ref<const typename ReluNetwork<Scalar>::MatrixX>& inputs,
    const Eigen::Ref<const typename ReluNetwork<Scalar>::VectorX>& targets) {
  const auto n = static_cast<Scalar>(inputs.cols());
  typename ReluNetwork<Scalar>::RowVectorX residual = net.raw_output(inputs) - targets.transpose();
  const Scalar loss = residual.squaredNorm() / n;
  return {loss, backward(net, inputs, (Scalar(2) / n) * residual)};
}

/// Clips every weight and bias into [-tau, tau]. Idempotent.
template <typename Scalar>
void project_constraints_in_place(ReluNetwork<Scalar>& net) {
  const auto tau = static_cast<Scalar>(net.params().weight_bound);
  for (auto& w : net.weights()) w = w.cwiseMax(-tau).cwiseMin(tau);
  for (auto& b : net.biases()) b = b.cwiseMax(-tau).cwiseMin(tau);
}

template <typename Scalar>
ReluNetwork<Scalar> project_constraints(ReluNetwork<Scalar> net) {
  project_constraints_in_place(net);
  return net;
}

/// True when every entry is within tau and the parameter count is within I.
template <typename Scalar>
bool satisfies_constraints(const ReluNetwork<Scalar>& net) {
  const auto tau = static_cast<Scalar>(net.params().weight_bound);
  for (const auto& w : net.weights()) {
    if (w.size() > 0 && w.cwiseAbs().maxCoeff() > tau) return false;
  }
  for (const auto& b : net.biases()) {
    if (b.size() > 0 && b.cwiseAbs().maxCoeff() > tau) return false;
  }
  return net.parameter_count() <= net.params().budget;
}

/// He-uniform weights, zero biases, projected into the class. Same stream, same network.
/// With `input_sq_norm` (mean squared norm of the inputs) the first layer is scaled by it instead
/// of the fan-in, so the initial function does not depend on how many coordinates carry the input.
ReluNet init_network(const NetworkClassParams& params, Rng& rng, std::optional<double> input_sq_norm = std::nullopt);

enum class Optimizer { GradientDescent, Momentum };

struct TrainConfig {
  int epochs = 20;
  int batch_size = 256;
  double learning_rate = 0.01;
  Optimizer optimizer = Optimizer::Momentum;
  double momentum = 0.9;
  /// Learning rate decays linearly from learning_rate to learning_rate * final_lr_fraction.
  double final_lr_fraction = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct FitResult {
  ReluNet net;
  /// Mean squared error of the raw output, averaged over each epoch's minibatches.
  std::vector<double> epoch_mse;
  /// Mean squared error of the clamped network on the full training set.
  double final_mse = 0.0;
};

/**
 * Minibatch (momentum) gradient descent on the mean squared error, with a projection into
 * [-tau, tau] after every step. batch_size >= N gives full-batch descent without shuffling.
 * Throws DomainError on empty data, ShapeError on mismatched inputs/targets.
 */
FitResult fit_least_squares(ReluNet net, const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                            const Eigen::Ref<const Eigen::VectorXd>& targets, const TrainConfig& cfg);

/// Max over parameters of |g_analytic - g_fd| / max(1e-8, |g_fd|) for the loss (f(x) - y)^2,
/// using central differences with step 1e-5. Returns nullopt when some hidden pre-activation
/// at x lies within 1e-3 of the ReLU kink; the caller should resample the point.
std::optional<double> grad_check(const ReluNet& net, const Eigen::Ref<const Eigen::VectorXd>& x, double y);

/// Checkpoint: int64 L, int64 widths[L + 1], f64 tau, f64 V, then per layer W (row-major), b.
void save_network(std::ostream& out, const ReluNet& net);
ReluNet load_network(std::istream& in);

extern template class ReluNetwork<double>;

}  // namespace nfqe
