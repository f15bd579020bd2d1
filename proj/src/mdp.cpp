#include "nfqe/mdp.hpp"

#include <cmath>
#include <stdexcept>

#include "nfqe/errors.hpp"

namespace nfqe {

Policy::Policy(int action_count, int horizon, std::string tag)
    : action_count_(action_count), horizon_(horizon), tag_(std::move(tag)) {
  if (action_count < 1) throw ConfigError("policy needs at least one action");
  if (horizon < 1) throw ConfigError("policy horizon must be positive");
}

Vector Policy::probs(int h, const ConstVectorRef& obs) const {
  if (h < 1 || h > horizon_) {
    throw std::out_of_range("step index " + std::to_string(h) + " outside 1.." + std::to_string(horizon_));
  }
  return compute_probs(h, obs);
}

int Policy::sample_action(int h, const ConstVectorRef& obs, Rng& rng) const {
  const Vector p = probs(h, obs);
  const double u = rng.uniform();
  double acc = 0.0;
  for (int a = 0; a < p.size(); ++a) {
    acc += p[a];
    if (u < acc) return a;
  }
  // u landed in the rounding gap above the cumulative sum; take the last supported action.
  for (int a = static_cast<int>(p.size()) - 1; a >= 0; --a) {
    if (p[a] > 0.0) return a;
  }
  return static_cast<int>(p.size()) - 1;
}

UniformPolicy::UniformPolicy(int action_count, int horizon) : Policy(action_count, horizon, "uniform") {}

Vector UniformPolicy::compute_probs(int, const ConstVectorRef&) const {
  return Vector::Constant(action_count(), 1.0 / action_count());
}

PointMassPolicy::PointMassPolicy(int action_count, int horizon, int action)
    : Policy(action_count, horizon, "point-mass-" + std::to_string(action)), action_(action) {
  if (action < 0 || action >= action_count) throw ConfigError("point-mass action out of range");
}

Vector PointMassPolicy::compute_probs(int, const ConstVectorRef&) const {
  Vector p = Vector::Zero(action_count());
  p[action_] = 1.0;
  return p;
}

MixturePolicy::MixturePolicy(double weight, PolicyPtr first, PolicyPtr second)
    : Policy(first->action_count(), first->horizon(),
             "mixture(" + std::to_string(weight) + "*" + first->tag() + "+" + second->tag() + ")"),
      weight_(weight),
      first_(std::move(first)),
      second_(std::move(second)) {
  if (!(weight >= 0.0 && weight <= 1.0)) throw ConfigError("mixture weight must lie in [0, 1]");
  if (first_->action_count() != second_->action_count() || first_->horizon() != second_->horizon()) {
    throw ConfigError("mixture components disagree on action count or horizon");
  }
}

Vector MixturePolicy::compute_probs(int h, const ConstVectorRef& obs) const {
  if (weight_ == 1.0) return first_->probs(h, obs);
  if (weight_ == 0.0) return second_->probs(h, obs);
  return weight_ * first_->probs(h, obs) + (1.0 - weight_) * second_->probs(h, obs);
}

PolicyPtr make_behavior_mixture(PolicyPtr target, double epsilon) {
  auto uniform = std::make_shared<UniformPolicy>(target->action_count(), target->horizon());
  return std::make_shared<MixturePolicy>(epsilon, std::move(target), std::move(uniform));
}

namespace {

int horizon_of(const std::vector<Matrix>& tables) {
  if (tables.empty()) throw ConfigError("tabular policy needs at least one step");
  return static_cast<int>(tables.size());
}

}  // namespace

TabularPolicy::TabularPolicy(std::vector<Matrix> tables, std::string tag)
    : Policy(static_cast<int>(tables.empty() ? 0 : tables.front().cols()), horizon_of(tables), std::move(tag)),
      tables_(std::move(tables)) {
  for (const auto& t : tables_) {
    if (t.rows() != tables_.front().rows() || t.cols() != action_count()) {
      throw ConfigError("tabular policy tables must share one shape");
    }
    if ((t.array() < 0.0).any()) throw ValidationError("tabular policy has a negative probability");
    if (((t.rowwise().sum().array() - 1.0).abs() > 1e-9).any()) {
      throw ValidationError("tabular policy rows must sum to 1");
    }
  }
}

Vector TabularPolicy::compute_probs(int h, const ConstVectorRef& obs) const {
  const Matrix& table = tables_[h - 1];
  if (obs.size() != table.rows()) throw ShapeError("tabular policy expects a one-hot observation");
  Eigen::Index s = 0;
  obs.maxCoeff(&s);
  return table.row(s).transpose();
}

SoftmaxLinearPolicy::SoftmaxLinearPolicy(std::vector<Matrix> weights, std::vector<Vector> biases, std::string tag)
    : Policy(weights.empty() ? 0 : static_cast<int>(weights.front().rows()), horizon_of(weights), std::move(tag)),
      weights_(std::move(weights)),
      biases_(std::move(biases)) {
  if (biases_.size() != weights_.size()) throw ConfigError("softmax policy needs one bias per step");
  for (std::size_t h = 0; h < weights_.size(); ++h) {
    if (weights_[h].rows() != action_count() || biases_[h].size() != action_count() ||
        weights_[h].cols() != weights_.front().cols()) {
      throw ConfigError("softmax policy parameters have inconsistent shapes");
    }
  }
}

Vector SoftmaxLinearPolicy::compute_probs(int h, const ConstVectorRef& obs) const {
  const Matrix& w = weights_[h - 1];
  if (obs.size() != w.cols()) throw ShapeError("softmax policy observation dimension mismatch");
  Vector logits = w * obs + biases_[h - 1];
  logits.array() -= logits.maxCoeff();
  Vector p = logits.array().exp();
  return p / p.sum();
}

void check_compatible(const Environment& env, const Policy& policy) {
  if (env.action_count() != policy.action_count()) {
    throw ConfigError("environment and policy disagree on the action count");
  }
  if (env.horizon() > policy.horizon()) throw ConfigError("policy horizon shorter than environment horizon");
}

Trajectory rollout(const Environment& env, const Policy& policy, Rng& rng) {
  check_compatible(env, policy);
  const int horizon = env.horizon();
  Trajectory traj;
  traj.states.reserve(horizon);
  traj.actions.reserve(horizon);
  traj.rewards.reserve(horizon);
  State s = env.initial_sample(rng);
  for (int h = 1; h <= horizon; ++h) {
    const int a = policy.sample_action(h, s.obs, rng);
    const double r = env.reward(h, s, a, rng);
    traj.states.push_back(s);
    traj.actions.push_back(a);
    traj.rewards.push_back(r);
    traj.ret += r;
    if (h < horizon) s = env.transition(h, s, a, rng);
  }
  return traj;
}

}  // namespace nfqe
