#include "nfqe/fqe.hpp"

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "nfqe/errors.hpp"

namespace nfqe {

Matrix encode_inputs(const Eigen::Ref<const Matrix>& states, const std::vector<int>& actions, int action_count) {
  if (static_cast<Eigen::Index>(actions.size()) != states.cols()) throw ShapeError("one action per state required");
  Matrix x = Matrix::Zero(states.rows() + action_count, states.cols());
  x.topRows(states.rows()) = states;
  for (Eigen::Index k = 0; k < states.cols(); ++k) {
    const int a = actions[static_cast<std::size_t>(k)];
    if (a < 0 || a >= action_count) throw std::out_of_range("action index out of range");
    x(states.rows() + a, k) = 1.0;
  }
  return x;
}

Matrix encode_fixed_action(const Eigen::Ref<const Matrix>& states, int action, int action_count) {
  Matrix x = Matrix::Zero(states.rows() + action_count, states.cols());
  x.topRows(states.rows()) = states;
  x.row(states.rows() + action).setOnes();
  return x;
}

Matrix action_values(const ReluNet& q, const Eigen::Ref<const Matrix>& states, int action_count) {
  Matrix values(action_count, states.cols());
  for (int a = 0; a < action_count; ++a) values.row(a) = q.output(encode_fixed_action(states, a, action_count));
  return values;
}

QStack::QStack(int horizon, int action_count) : action_count_(action_count), nets_(static_cast<std::size_t>(horizon)) {
  if (horizon < 1 || action_count < 1) throw ConfigError("QStack needs H >= 1 and at least one action");
}

const ReluNet& QStack::at(int h) const {
  if (!has(h)) throw std::out_of_range("QStack has no network for step " + std::to_string(h));
  return *nets_[static_cast<std::size_t>(h - 1)];
}

bool QStack::has(int h) const { return h >= 1 && h <= horizon() && nets_[static_cast<std::size_t>(h - 1)].has_value(); }

void QStack::set(int h, ReluNet net) {
  if (h < 1 || h > horizon()) throw std::out_of_range("QStack step out of range");
  nets_[static_cast<std::size_t>(h - 1)] = std::move(net);
}

Matrix QStack::action_values(int h, const Eigen::Ref<const Matrix>& states) const {
  if (h == horizon() + 1) return Matrix::Zero(action_count_, states.cols());
  return nfqe::action_values(at(h), states, action_count_);
}

Vector regression_targets(const StepDataset& dataset, const ReluNet* q_next, const Policy& target) {
  const int horizon = target.horizon();
  const int action_count = target.action_count();
  Vector y = dataset.rewards;
  if (q_next != nullptr && dataset.h < horizon) {
    // s' is a step-(h+1) state, so its action distribution is pi_{h+1}.
    const Matrix next_values = action_values(*q_next, dataset.next_states, action_count);
    for (int k = 0; k < dataset.size(); ++k) {
      const Vector p = target.probs(dataset.h + 1, dataset.next_states.col(k));
      y[k] += p.dot(next_values.col(k));
    }
  }
  return y.cwiseMax(0.0).cwiseMin(static_cast<double>(horizon));
}

double value_readout(const ReluNet& q1, const Eigen::Ref<const Matrix>& xi_samples, const Policy& target) {
  const Eigen::Index m = xi_samples.cols();
  if (m == 0) throw DomainError("value_readout needs at least one initial state");
  const Matrix values = action_values(q1, xi_samples, target.action_count());
  double total = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) total += target.probs(1, xi_samples.col(i)).dot(values.col(i));
  return total / static_cast<double>(m);
}

FqeResult fqe_estimate(const std::vector<StepDataset>& datasets, const Policy& target,
                       const NetworkClassParams& params, const TrainConfig& cfg,
                       const Eigen::Ref<const Matrix>& xi_samples, const Rng& rng, const FqeOptions& options) {
  const int horizon = target.horizon();
  const int action_count = target.action_count();
  if (static_cast<int>(datasets.size()) != horizon) {
    throw ConfigError("fqe_estimate needs one dataset per step (" + std::to_string(horizon) + "), got " +
                      std::to_string(datasets.size()));
  }
  for (int h = 1; h <= horizon; ++h) {
    const auto& ds = datasets[static_cast<std::size_t>(h - 1)];
    if (ds.h != h) throw ConfigError("dataset " + std::to_string(h) + " is labelled step " + std::to_string(ds.h));
    if (ds.obs_dim() + action_count != params.input_dim) {
      throw ConfigError("network input_dim must equal obs_dim + action_count");
    }
  }
  params.validate();
  cfg.validate();

  FqeResult result;
  result.q_stack = QStack(horizon, action_count);
  result.per_step_train_mse.assign(static_cast<std::size_t>(horizon), 0.0);

  for (int h = horizon; h >= 1; --h) {
    const auto& ds = datasets[static_cast<std::size_t>(h - 1)];
    const ReluNet* q_next = h < horizon ? &result.q_stack.at(h + 1) : nullptr;
    const Vector y = regression_targets(ds, q_next, target);
    const Matrix x = encode_inputs(ds.states, ds.actions, action_count);

    ReluNet start;
    if (options.warm_start && q_next != nullptr) {
      start = *q_next;
    } else {
      Rng init_rng = rng.split(static_cast<std::uint64_t>(h));
      const double sq_norm = x.colwise().squaredNorm().mean();
      start = sq_norm > 0.0 ? init_network(params, init_rng, sq_norm) : init_network(params, init_rng);
    }
    TrainConfig step_cfg = cfg;
    step_cfg.seed = mix64(cfg.seed ^ rng.split({static_cast<std::uint64_t>(h), 1}).seed());
    FitResult fit = fit_least_squares(std::move(start), x, y, step_cfg);
    result.per_step_train_mse[static_cast<std::size_t>(h - 1)] = fit.final_mse;
    result.q_stack.set(h, std::move(fit.net));
  }
  result.v_hat = value_readout(result.q_stack.at(1), xi_samples, target);

  result.config_echo = {
      {"horizon", horizon},
      {"action_count", action_count},
      {"target_policy", target.tag()},
      {"sample_counts", [&] {
         std::vector<int> k;
         for (const auto& ds : datasets) k.push_back(ds.size());
         return k;
       }()},
      {"xi_samples", xi_samples.cols()},
      {"network",
       {{"depth", params.depth},
        {"width", params.width},
        {"budget", params.budget},
        {"weight_bound", params.weight_bound},
        {"output_bound", params.output_bound},
        {"input_dim", params.input_dim}}},
      {"train",
       {{"epochs", cfg.epochs},
        {"batch_size", cfg.batch_size},
        {"learning_rate", cfg.learning_rate},
        {"optimizer", cfg.optimizer == Optimizer::Momentum ? "momentum" : "gradient_descent"},
        {"momentum", cfg.momentum},
        {"final_lr_fraction", cfg.final_lr_fraction},
        {"seed", cfg.seed}}},
      {"warm_start", options.warm_start},
      {"rng_seed", rng.seed()},
  };
  return result;
}

nlohmann::json to_json(const FqeResult& result) {
  return {{"v_hat", result.v_hat}, {"per_step_train_mse", result.per_step_train_mse}, {"config", result.config_echo}};
}

void write_fqe_result(std::ostream& out, const FqeResult& result) { out << to_json(result).dump(2) << '\n'; }

void save_qstack(std::ostream& out, const QStack& stack) {
  const std::int64_t header[2] = {stack.horizon(), stack.action_count()};
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  for (int h = 1; h <= stack.horizon(); ++h) save_network(out, stack.at(h));
}

QStack load_qstack(std::istream& in) {
  std::int64_t header[2] = {0, 0};
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!in || header[0] < 1 || header[1] < 1) throw ValidationError("bad QStack header");
  QStack stack(static_cast<int>(header[0]), static_cast<int>(header[1]));
  for (int h = 1; h <= stack.horizon(); ++h) stack.set(h, load_network(in));
  return stack;
}

}  // namespace nfqe
