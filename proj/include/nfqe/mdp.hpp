#pragma once

#include <Eigen/Dense>

#include <memory>
#include <string>
#include <vector>

#include "nfqe/rng.hpp"

namespace nfqe {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using ConstVectorRef = Eigen::Ref<const Eigen::VectorXd>;

/// Environment state. Learners and policies only ever read `obs`; `latent` is the
/// environment's internal coordinate, kept for diagnostics.
struct State {
  Vector obs;
  Vector latent;
};

/**
 * Finite-horizon, time-inhomogeneous MDP with a finite action set.
 *
 * Steps are 1-based (h = 1..H). Implementations are immutable after construction; all
 * randomness comes from the caller's stream.
 */
class Environment {
 public:
  virtual ~Environment() = default;

  virtual int horizon() const = 0;
  virtual int action_count() const = 0;
  virtual int obs_dim() const = 0;
  virtual int intrinsic_dim() const = 0;
  /// Sup-norm bound B on observations.
  virtual double bound() const = 0;
  /// Reach of the state manifold.
  virtual double reach() const = 0;

  virtual State initial_sample(Rng& rng) const = 0;
  virtual State transition(int h, const State& s, int a, Rng& rng) const = 0;
  /// Sampled reward in [0, 1].
  virtual double reward(int h, const State& s, int a, Rng& rng) const = 0;
  virtual double mean_reward(int h, const State& s, int a) const = 0;
};

/// Per-step conditional action distribution pi_h(.|s) over a finite action set.
class Policy {
 public:
  Policy(int action_count, int horizon, std::string tag);
  virtual ~Policy() = default;

  int action_count() const { return action_count_; }
  int horizon() const { return horizon_; }
  const std::string& tag() const { return tag_; }

  /// Action probabilities at step h (1-based). Throws std::out_of_range for a bad step.
  Vector probs(int h, const ConstVectorRef& obs) const;
  int sample_action(int h, const ConstVectorRef& obs, Rng& rng) const;

 protected:
  virtual Vector compute_probs(int h, const ConstVectorRef& obs) const = 0;

 private:
  int action_count_;
  int horizon_;
  std::string tag_;
};

using PolicyPtr = std::shared_ptr<const Policy>;

class UniformPolicy final : public Policy {
 public:
  UniformPolicy(int action_count, int horizon);

 protected:
  Vector compute_probs(int h, const ConstVectorRef& obs) const override;
};

class PointMassPolicy final : public Policy {
 public:
  PointMassPolicy(int action_count, int horizon, int action);

 protected:
  Vector compute_probs(int h, const ConstVectorRef& obs) const override;

 private:
  int action_;
};

/// weight * first + (1 - weight) * second.
class MixturePolicy final : public Policy {
 public:
  MixturePolicy(double weight, PolicyPtr first, PolicyPtr second);

  double weight() const { return weight_; }

 protected:
  Vector compute_probs(int h, const ConstVectorRef& obs) const override;

 private:
  double weight_;
  PolicyPtr first_;
  PolicyPtr second_;
};

/// epsilon * target + (1 - epsilon) * uniform; epsilon = 1 reproduces the target.
PolicyPtr make_behavior_mixture(PolicyPtr target, double epsilon);

/**
 * Table policy for one-hot observations: the state index is the argmax of the observation.
 * `tables[h - 1]` is an (n_states x n_actions) row-stochastic matrix.
 */
class TabularPolicy final : public Policy {
 public:
  explicit TabularPolicy(std::vector<Matrix> tables, std::string tag = "tabular");

  const std::vector<Matrix>& tables() const { return tables_; }

 protected:
  Vector compute_probs(int h, const ConstVectorRef& obs) const override;

 private:
  std::vector<Matrix> tables_;
};

/// softmax(weights[h-1] * obs + biases[h-1]).
class SoftmaxLinearPolicy final : public Policy {
 public:
  SoftmaxLinearPolicy(std::vector<Matrix> weights, std::vector<Vector> biases, std::string tag = "softmax-linear");

 protected:
  Vector compute_probs(int h, const ConstVectorRef& obs) const override;

 private:
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
};

struct Trajectory {
  std::vector<State> states;
  std::vector<int> actions;
  std::vector<double> rewards;
  double ret = 0.0;
};

/// s_1 ~ xi, a_h ~ pi_h(.|s_h), r_h ~ R_h(s_h, a_h), s_{h+1} ~ P_h(.|s_h, a_h).
Trajectory rollout(const Environment& env, const Policy& policy, Rng& rng);

/// Throws ConfigError if env and policy disagree on action count or horizon.
void check_compatible(const Environment& env, const Policy& policy);

}  // namespace nfqe
