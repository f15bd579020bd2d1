#pragma once

#include <json.hpp>

#include <iosfwd>
#include <optional>
#include <vector>

#include "nfqe/manifold_env.hpp"
#include "nfqe/mdp.hpp"
#include "nfqe/neural.hpp"

namespace nfqe {

/// Network input for (s, a): the observation with a one-hot action block appended.
Matrix encode_inputs(const Eigen::Ref<const Matrix>& states, const std::vector<int>& actions, int action_count);
/// Inputs for every state paired with one fixed action.
Matrix encode_fixed_action(const Eigen::Ref<const Matrix>& states, int action, int action_count);

/// Q-hat_1 .. Q-hat_H; Q-hat_{H+1} is identically zero.
class QStack {
 public:
  QStack(int horizon, int action_count);

  int horizon() const { return static_cast<int>(nets_.size()); }
  int action_count() const { return action_count_; }

  const ReluNet& at(int h) const;
  void set(int h, ReluNet net);
  bool has(int h) const;

  /// (action_count x M) matrix of Q-hat_h(s_m, a); zeros for h = H + 1.
  Matrix action_values(int h, const Eigen::Ref<const Matrix>& states) const;

 private:
  int action_count_;
  std::vector<std::optional<ReluNet>> nets_;
};

/// (action_count x M) values q(s_m, a) of a single network.
Matrix action_values(const ReluNet& q, const Eigen::Ref<const Matrix>& states, int action_count);

/**
 * Regression targets y_k = r_k + sum_a pi_{h+1}(a | s'_k) q_next(s'_k, a), clamped to [0, H]
 * with H = target.horizon(). `q_next` is Q-hat_{h+1}; pass nullptr for the zero function
 * (always the case at h = H).
 */
Vector regression_targets(const StepDataset& dataset, const ReluNet* q_next, const Policy& target);

/// (1/M) sum_m sum_a pi_1(a | s_m) q1(s_m, a). Throws DomainError when M = 0.
double value_readout(const ReluNet& q1, const Eigen::Ref<const Matrix>& xi_samples, const Policy& target);

struct FqeOptions {
  /// Start the step-h regression from Q-hat_{h+1} instead of a fresh initialization.
  bool warm_start = false;
};

struct FqeResult {
  double v_hat = 0.0;
  QStack q_stack{1, 1};
  std::vector<double> per_step_train_mse;  // index h - 1
  nlohmann::json config_echo;
};

/**
 * Backward recursion h = H..1: targets from regression_targets, Q-hat_h fitted by
 * fit_least_squares on (s_k, onehot(a_k)), then the value readout at step 1.
 * `datasets[h - 1]` must be the step-h dataset. Network initialization for step h uses
 * rng.split(h). Throws ConfigError when a dataset is missing or mislabelled.
 */
FqeResult fqe_estimate(const std::vector<StepDataset>& datasets, const Policy& target,
                       const NetworkClassParams& params, const TrainConfig& cfg,
                       const Eigen::Ref<const Matrix>& xi_samples, const Rng& rng, const FqeOptions& options = {});

/// Structured text (JSON) with v_hat, per-step training MSE and the configuration echo.
nlohmann::json to_json(const FqeResult& result);
void write_fqe_result(std::ostream& out, const FqeResult& result);

/// Q-hat_1..Q-hat_H as consecutive network checkpoints, preceded by int64 H and action count.
void save_qstack(std::ostream& out, const QStack& stack);
QStack load_qstack(std::istream& in);

}  // namespace nfqe
