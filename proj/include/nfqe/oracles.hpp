#pragma once

#include <json.hpp>

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nfqe/mdp.hpp"

namespace nfqe {

/**
 * Finite MDP. transitions[h-1][a] is an (n_states x n_states) row-stochastic matrix whose
 * row s is P_h(. | s, a); rewards[h-1] is (n_states x n_actions) with entries in [0, 1].
 */
struct TabularMdp {
  int n_states = 0;
  int n_actions = 0;
  int horizon = 0;
  std::vector<std::vector<Matrix>> transitions;
  std::vector<Matrix> rewards;
  Vector initial;

  /// Throws ValidationError when a row is off by more than `tolerance` or a reward leaves [0, 1].
  void validate(double tolerance = 1e-9) const;
};

/// A tabular MDP together with the optional target policy stored next to it on disk.
struct TabularBundle {
  TabularMdp mdp;
  std::optional<std::vector<Matrix>> target_policy;
  std::string name;
};

/**
 * JSON document: {"n_states", "n_actions", "horizon", "P": [h][s][a][s'], "r": [h][s][a],
 * "xi": [s], optional "target_policy": [h][s][a], optional "name"}. Validated on load.
 */
TabularBundle parse_tabular_bundle(const nlohmann::json& doc);
TabularBundle load_tabular_bundle(const std::string& path);
nlohmann::json to_json(const TabularMdp& mdp);

/// TabularMdp as an Environment with one-hot observations (D = d = n_states) and
/// deterministic rewards r_h(s, a).
class TabularEnvironment final : public Environment {
 public:
  explicit TabularEnvironment(TabularMdp mdp);

  int horizon() const override { return mdp_.horizon; }
  int action_count() const override { return mdp_.n_actions; }
  int obs_dim() const override { return mdp_.n_states; }
  int intrinsic_dim() const override { return mdp_.n_states; }
  double bound() const override { return 1.0; }
  /// Half the distance between two one-hot vertices.
  double reach() const override;

  State initial_sample(Rng& rng) const override;
  State transition(int h, const State& s, int a, Rng& rng) const override;
  double reward(int h, const State& s, int a, Rng& rng) const override;
  double mean_reward(int h, const State& s, int a) const override;

  const TabularMdp& mdp() const { return mdp_; }
  State make_state(int s) const;
  static int state_index(const State& s);

 private:
  int sample_categorical(const Eigen::Ref<const Eigen::RowVectorXd>& probs, Rng& rng) const;

  TabularMdp mdp_;
};

Vector one_hot(int index, int size);

struct TabularSolution {
  std::vector<Matrix> q;  // q[h-1] is (n_states x n_actions)
  double value = 0.0;
};

/// Exact backward induction of Q^pi_h = r_h + P_h sum_a' pi_{h+1}(a'|s') Q^pi_{h+1}(s', a').
TabularSolution tabular_dp(const TabularMdp& mdp, const Policy& policy);

/// (n_states x n_actions) expected next-step value sum_s' P_h(s'|s,a) sum_a' pi_{h+1}(a'|s') next_q(s',a').
Matrix expected_next_value(const TabularMdp& mdp, const Policy& policy, int h, const Matrix& next_q);

/// max_{h,s,a} |Q_h - T_h^pi Q_{h+1}| for a candidate solution.
double bellman_residual(const TabularMdp& mdp, const Policy& policy, const TabularSolution& solution);

struct ValueEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  long long n_rollouts = 0;
};

/// Mean and standard error of n i.i.d. rollout returns. Rollout i draws from rng.split(i);
/// the reduction runs in index order, so the result is independent of `workers`.
ValueEstimate monte_carlo_value(const Environment& env, const Policy& policy, long long n, const Rng& rng,
                                int workers = 1);

}  // namespace nfqe
