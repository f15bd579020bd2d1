#include "nfqe/neural.hpp"

#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <string>

namespace nfqe {

template class ReluNetwork<double>;

void NetworkClassParams::validate() const {
  if (depth < 1 || width < 1 || budget < 1 || input_dim < 1) {
    throw ConfigError("network class: L, p, I and input_dim must be positive");
  }
  if (!(weight_bound > 0.0)) throw ConfigError("network class: tau must be positive");
  if (!(output_bound > 0.0)) throw ConfigError("network class: V must be positive");
}

namespace {

// ceil that ignores floating noise just above an integer, e.g. pow(10000, 0.5) = 100.00000000000001.
long long ceil_tolerant(double x) { return static_cast<long long>(std::ceil(x - 1e-9 * std::max(1.0, std::abs(x)))); }

}  // namespace

NetworkClassParams schedule_from_theorem(long long sample_count, double alpha, int intrinsic_dim, double bound,
                                         int horizon, double reach, int input_dim, const ScheduleConstants& c) {
  if (sample_count < 2) throw DomainError("schedule needs K >= 2");
  if (!(alpha > 0.0) || intrinsic_dim < 1) throw DomainError("schedule needs alpha > 0 and d >= 1");
  if (!(c.depth > 0.0 && c.width > 0.0 && c.budget > 0.0)) throw DomainError("schedule constants must be positive");
  if (horizon < 1) throw DomainError("schedule needs H >= 1");

  const double k = static_cast<double>(sample_count);
  const double d = intrinsic_dim;
  const double log_k = std::log(k);
  const double growth = std::pow(k, d / (2.0 * alpha + d));

  NetworkClassParams p;
  p.depth = static_cast<int>(std::max(1LL, ceil_tolerant(c.depth * log_k)));
  p.width = static_cast<int>(std::max(1LL, ceil_tolerant(c.width * growth)));
  p.budget = std::max(1LL, ceil_tolerant(c.budget * growth * log_k));
  p.weight_bound = std::max({bound, static_cast<double>(horizon), std::sqrt(d), reach * reach});
  p.output_bound = horizon;
  p.input_dim = input_dim;
  return p;
}

long long dense_parameter_count(int input_dim, const std::vector<int>& hidden_widths) {
  long long count = 0;
  long long fan_in = input_dim;
  for (int w : hidden_widths) {
    count += fan_in * w + w;
    fan_in = w;
  }
  return count + fan_in + 1;
}

std::vector<int> architecture_for(const NetworkClassParams& params) {
  params.validate();
  const auto hidden_layers = static_cast<std::size_t>(params.depth - 1);
  if (hidden_layers == 0) {
    if (dense_parameter_count(params.input_dim, {}) > params.budget) {
      throw ConfigError("parameter budget too small for a linear model on this input");
    }
    return {};
  }
  for (int w = params.width; w >= 1; --w) {
    std::vector<int> widths(hidden_layers, w);
    if (dense_parameter_count(params.input_dim, widths) <= params.budget) return widths;
  }
  throw ConfigError("no architecture of depth " + std::to_string(params.depth) + " fits parameter budget " +
                    std::to_string(params.budget));
}

ReluNet init_network(const NetworkClassParams& params, Rng& rng, std::optional<double> input_sq_norm) {
  if (input_sq_norm && !(*input_sq_norm > 0.0)) throw DomainError("init_network: input_sq_norm must be positive");
  ReluNet net(params, architecture_for(params));
  for (std::size_t layer = 0; layer < net.weights().size(); ++layer) {
    auto& w = net.weights()[layer];
    const double scale = layer == 0 && input_sq_norm ? *input_sq_norm : static_cast<double>(w.cols());
    const double limit = std::sqrt(6.0 / scale);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = rng.uniform(-limit, limit);
    }
  }
  project_constraints_in_place(net);
  return net;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("train config: learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train config: momentum must lie in [0, 1)");
  if (!(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0)) {
    throw ConfigError("train config: final_lr_fraction must lie in (0, 1]");
  }
}

FitResult fit_least_squares(ReluNet net, const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                            const Eigen::Ref<const Eigen::VectorXd>& targets, const TrainConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = inputs.cols();
  if (n == 0) throw DomainError("fit_least_squares: empty data");
  if (targets.size() != n) throw ShapeError("fit_least_squares: inputs and targets differ in length");
  if (inputs.rows() != net.input_dim()) throw ShapeError("fit_least_squares: input dimension mismatch");

  Rng rng(cfg.seed);
  const bool full_batch = cfg.batch_size >= n;
  const Eigen::Index batch = full_batch ? n : cfg.batch_size;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  const bool use_momentum = cfg.optimizer == Optimizer::Momentum;
  NetworkGradient<double> velocity;
  for (std::size_t i = 0; i < net.weights().size(); ++i) {
    velocity.weights.push_back(Eigen::MatrixXd::Zero(net.weights()[i].rows(), net.weights()[i].cols()));
    velocity.biases.push_back(Eigen::VectorXd::Zero(net.biases()[i].size()));
  }

  FitResult result;
  result.epoch_mse.reserve(cfg.epochs);
  Eigen::MatrixXd batch_inputs;
  Eigen::VectorXd batch_targets;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double progress = cfg.epochs > 1 ? static_cast<double>(epoch) / (cfg.epochs - 1) : 0.0;
    const double lr = cfg.learning_rate * (1.0 - (1.0 - cfg.final_lr_fraction) * progress);
    if (!full_batch) std::shuffle(order.begin(), order.end(), rng.engine());

    double loss_sum = 0.0;
    for (Eigen::Index start = 0; start < n; start += batch) {
      const Eigen::Index len = std::min(batch, n - start);
      double loss = 0.0;
      NetworkGradient<double> grad;
      if (full_batch) {
        std::tie(loss, grad) = squared_loss_gradient<double>(net, inputs, targets);
      } else {
        const auto idx = Eigen::Map<const Eigen::Matrix<Eigen::Index, Eigen::Dynamic, 1>>(order.data() + start, len);
        batch_inputs = inputs(Eigen::all, idx);
        batch_targets = targets(idx);
        std::tie(loss, grad) = squared_loss_gradient<double>(net, batch_inputs, batch_targets);
      }
      loss_sum += loss * static_cast<double>(len);

      for (std::size_t i = 0; i < net.weights().size(); ++i) {
        if (use_momentum) {
          velocity.weights[i] = cfg.momentum * velocity.weights[i] - lr * grad.weights[i];
          velocity.biases[i] = cfg.momentum * velocity.biases[i] - lr * grad.biases[i];
          net.weights()[i] += velocity.weights[i];
          net.biases()[i] += velocity.biases[i];
        } else {
          net.weights()[i] -= lr * grad.weights[i];
          net.biases()[i] -= lr * grad.biases[i];
        }
      }
      project_constraints_in_place(net);
    }
    result.epoch_mse.push_back(loss_sum / static_cast<double>(n));
  }
  result.final_mse = (net.output(inputs) - targets.transpose()).squaredNorm() / static_cast<double>(n);
  result.net = std::move(net);
  return result;
}

std::optional<double> grad_check(const ReluNet& net, const Eigen::Ref<const Eigen::VectorXd>& x, double y) {
  if (x.size() != net.input_dim()) throw ShapeError("grad_check: input dimension mismatch");

  // Reject points whose hidden pre-activations sit near a kink.
  Eigen::VectorXd act = x;
  for (std::size_t i = 0; i + 1 < net.weights().size(); ++i) {
    const Eigen::VectorXd z = net.weights()[i] * act + net.biases()[i];
    if (z.size() > 0 && z.cwiseAbs().minCoeff() <= 1e-3) return std::nullopt;
    act = z.cwiseMax(0.0);
  }

  Eigen::VectorXd target(1);
  target[0] = y;
  const auto analytic = squared_loss_gradient<double>(net, x, target).second;

  // Finite differences run in extended precision; the loss is piecewise quadratic in each
  // parameter, so the central difference is exact up to rounding.
  using Wide = long double;
  auto wide = net.cast<Wide>();
  const ReluNetwork<Wide>::VectorX wide_x = x.cast<Wide>();
  const Wide h = 1e-5L;
  auto loss_at = [&] {
    const Wide r = wide.raw_forward(wide_x) - static_cast<Wide>(y);
    return r * r;
  };
  double worst = 0.0;
  auto check_entry = [&](Wide& param, double g_analytic) {
    const Wide saved = param;
    param = saved + h;
    const Wide up = loss_at();
    param = saved - h;
    const Wide down = loss_at();
    param = saved;
    const double g_fd = static_cast<double>((up - down) / (2 * h));
    worst = std::max(worst, std::abs(g_analytic - g_fd) / std::max(1e-8, std::abs(g_fd)));
  };
  for (std::size_t i = 0; i < wide.weights().size(); ++i) {
    auto& w = wide.weights()[i];
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
      for (Eigen::Index r = 0; r < w.rows(); ++r) check_entry(w(r, c), analytic.weights[i](r, c));
    }
    auto& b = wide.biases()[i];
    for (Eigen::Index r = 0; r < b.size(); ++r) check_entry(b[r], analytic.biases[i][r]);
  }
  return worst;
}

namespace {

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw ValidationError("truncated network checkpoint");
  return value;
}

}  // namespace

void save_network(std::ostream& out, const ReluNet& net) {
  const auto widths = net.layer_widths();
  put<std::int64_t>(out, net.depth());
  for (int w : widths) put<std::int64_t>(out, w);
  put<double>(out, net.params().weight_bound);
  put<double>(out, net.params().output_bound);
  for (std::size_t i = 0; i < net.weights().size(); ++i) {
    const auto& w = net.weights()[i];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) put<double>(out, w(r, c));
    }
    for (Eigen::Index r = 0; r < net.biases()[i].size(); ++r) put<double>(out, net.biases()[i][r]);
  }
}

ReluNet load_network(std::istream& in) {
  const auto depth = get<std::int64_t>(in);
  if (depth < 1 || depth > 10000) throw ValidationError("checkpoint: implausible depth");
  std::vector<int> widths;
  for (std::int64_t i = 0; i <= depth; ++i) {
    const auto w = get<std::int64_t>(in);
    if (w < 1) throw ValidationError("checkpoint: non-positive layer width");
    widths.push_back(static_cast<int>(w));
  }
  if (widths.back() != 1) throw ValidationError("checkpoint: output layer must have width 1");

  NetworkClassParams params;
  params.depth = static_cast<int>(depth);
  params.input_dim = widths.front();
  params.weight_bound = get<double>(in);
  params.output_bound = get<double>(in);
  const std::vector<int> hidden(widths.begin() + 1, widths.end() - 1);
  params.width = hidden.empty() ? 1 : *std::max_element(hidden.begin(), hidden.end());
  params.budget = dense_parameter_count(params.input_dim, hidden);

  ReluNet net(params, hidden);
  for (std::size_t i = 0; i < net.weights().size(); ++i) {
    auto& w = net.weights()[i];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = get<double>(in);
    }
    for (Eigen::Index r = 0; r < net.biases()[i].size(); ++r) net.biases()[i][r] = get<double>(in);
  }
  return net;
}

}  // namespace nfqe
