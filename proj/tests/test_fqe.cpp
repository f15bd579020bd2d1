#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "nfqe/errors.hpp"
#include "nfqe/fqe.hpp"
#include "nfqe/manifold_env.hpp"
#include "nfqe/oracles.hpp"

using namespace nfqe;

namespace {

NetworkClassParams linear_class(int input_dim, double v) {
  NetworkClassParams p;
  p.depth = 1;
  p.width = 1;
  p.budget = 1000;
  p.weight_bound = 10.0;
  p.output_bound = v;
  p.input_dim = input_dim;
  return p;
}

// q(s, 0) = 1, q(s, 1) = 3 for scalar s.
ReluNet one_three_net() {
  ReluNet q(linear_class(3, 5.0), {});
  q.weights()[0] << 0.0, 1.0, 3.0;
  return q;
}

StepDataset scalar_dataset(int h, const std::vector<double>& rewards) {
  const int k = static_cast<int>(rewards.size());
  StepDataset ds;
  ds.h = h;
  ds.states = Matrix::Zero(1, k);
  ds.next_states = Vector::LinSpaced(k, 0.0, 1.0).transpose();
  ds.actions.assign(static_cast<std::size_t>(k), 0);
  ds.rewards = Eigen::Map<const Vector>(rewards.data(), k);
  return ds;
}

// 3-state chain, 2 actions: action 1 moves right (sticky at the end), action 0 stays;
// a 0.2 chance of slipping back to state 0 on every move.
TabularMdp chain3() {
  TabularMdp mdp;
  mdp.n_states = 3;
  mdp.n_actions = 2;
  mdp.horizon = 3;
  Matrix stay = Matrix::Identity(3, 3) * 0.8;
  Matrix right = Matrix::Zero(3, 3);
  right(0, 1) = 0.8;
  right(1, 2) = 0.8;
  right(2, 2) = 0.8;
  stay.col(0).array() += 0.2;
  right.col(0).array() += 0.2;
  Matrix r(3, 2);
  r << 0.1, 0.3, 0.4, 0.6, 0.9, 0.5;
  for (int h = 0; h < 3; ++h) {
    mdp.transitions.push_back({stay, right});
    mdp.rewards.push_back(r);
  }
  mdp.initial = Vector::Unit(3, 0);
  return mdp;
}

std::vector<StepDataset> datasets_for(const Environment& env, const Policy& behavior, int k, const Rng& rng) {
  std::vector<StepDataset> out;
  for (int h = 1; h <= env.horizon(); ++h) out.push_back(generate_step_dataset(env, behavior, h, k, rng));
  return out;
}

Matrix initial_samples(const Environment& env, int m, Rng rng) {
  Matrix xi(env.obs_dim(), m);
  for (int i = 0; i < m; ++i) xi.col(i) = env.initial_sample(rng).obs;
  return xi;
}

NetworkClassParams table_class(const TabularMdp& mdp) {
  NetworkClassParams p;
  p.depth = 2;
  p.width = 4 * mdp.n_states * mdp.n_actions;
  p.budget = 100000;
  p.weight_bound = mdp.horizon;
  p.output_bound = mdp.horizon;
  p.input_dim = mdp.n_states + mdp.n_actions;
  return p;
}

}  // namespace

TEST(EncodeInputs, AppendsOneHotAction) {
  Matrix s(2, 2);
  s << 0.5, -1.0, 2.0, 3.0;
  const Matrix x = encode_inputs(s, {2, 0}, 3);
  Matrix expected(5, 2);
  expected << 0.5, -1.0, 2.0, 3.0, 0, 1, 0, 0, 1, 0;
  EXPECT_EQ(x, expected);
  EXPECT_THROW(encode_inputs(s, {3, 0}, 3), std::out_of_range);
}

TEST(RegressionTargets, TerminalStepUsesRewardOnly) {
  UniformPolicy pi(2, 4);
  const StepDataset ds = scalar_dataset(4, {0.1, 0.9, 0.4});
  const Vector y = regression_targets(ds, nullptr, pi);
  EXPECT_EQ(y, ds.rewards);
}

TEST(RegressionTargets, PointMassSelectsOneValue) {
  PointMassPolicy pi(2, 5, 1);
  const StepDataset ds = scalar_dataset(2, {0.2, 0.7});
  const ReluNet q = one_three_net();
  const Vector y = regression_targets(ds, &q, pi);
  EXPECT_DOUBLE_EQ(y[0], 3.2);
  EXPECT_DOUBLE_EQ(y[1], 3.7);
}

TEST(RegressionTargets, UniformAveragesActions) {
  UniformPolicy pi(2, 5);
  const StepDataset ds = scalar_dataset(2, {0.2, 0.7});
  const ReluNet q = one_three_net();
  const Vector y = regression_targets(ds, &q, pi);
  EXPECT_DOUBLE_EQ(y[0], 2.2);
  EXPECT_DOUBLE_EQ(y[1], 2.7);
}

TEST(RegressionTargets, ClampedToHorizon) {
  PointMassPolicy pi(2, 3, 1);
  const StepDataset ds = scalar_dataset(1, {0.9});
  ReluNet q(linear_class(3, 10.0), {});
  q.biases()[0] << 8.0;
  EXPECT_DOUBLE_EQ(regression_targets(ds, &q, pi)[0], 3.0);
}

TEST(RegressionTargets, UsesNextStepPolicy) {
  // Step-1 policy picks action 0, step-2 policy picks action 1; s' belongs to step 2.
  std::vector<Matrix> tables(2, Matrix(1, 2));
  tables[0] << 1.0, 0.0;
  tables[1] << 0.0, 1.0;
  TabularPolicy pi(tables);
  StepDataset ds;
  ds.h = 1;
  ds.states = Matrix::Ones(1, 1);
  ds.next_states = Matrix::Ones(1, 1);
  ds.actions = {0};
  ds.rewards = Vector::Constant(1, 0.5);
  ReluNet q(linear_class(3, 5.0), {});
  q.weights()[0] << 0.0, 1.0, 1.5;
  EXPECT_DOUBLE_EQ(regression_targets(ds, &q, pi)[0], 2.0);
}

TEST(RegressionTargets, MatchesBellmanBackupOnTabularMdp) {
  const TabularMdp mdp = chain3();
  TabularEnvironment env(mdp);
  Matrix t(3, 2);
  t << 0.3, 0.7, 0.5, 0.5, 0.9, 0.1;
  TabularPolicy target(std::vector<Matrix>(3, t));
  UniformPolicy behavior(2, 3);
  Rng rng(4);
  NetworkClassParams p = table_class(mdp);
  // Any network in the class serves as Q-hat_{h+1}; the backup must be exact for it.
  ReluNet q_next = init_network(p, rng);
  for (auto& b : q_next.biases()) b.array() += 0.3;
  Matrix q_table(3, 2);
  for (int s = 0; s < 3; ++s) q_table.row(s) = action_values(q_next, one_hot(s, 3), 2).transpose();
  const Matrix backup = mdp.rewards[0] + expected_next_value(mdp, target, 1, q_table);

  const StepDataset ds = generate_step_dataset(env, behavior, 1, 2000, Rng(5));
  const Vector y = regression_targets(ds, &q_next, target);
  // Per tuple: the one-sample backup at the observed s'. Averaged with P: the analytic backup.
  Matrix weighted = Matrix::Zero(3, 2);
  for (int k = 0; k < ds.size(); ++k) {
    int s = 0;
    int s_next = 0;
    ds.states.col(k).maxCoeff(&s);
    ds.next_states.col(k).maxCoeff(&s_next);
    const int a = ds.actions[k];
    const double v_next = target.probs(2, one_hot(s_next, 3)).dot(q_table.row(s_next).transpose());
    EXPECT_NEAR(y[k], mdp.rewards[0](s, a) + v_next, 1e-10);
  }
  for (int s = 0; s < 3; ++s) {
    for (int a = 0; a < 2; ++a) {
      for (int s_next = 0; s_next < 3; ++s_next) {
        const double v_next = target.probs(2, one_hot(s_next, 3)).dot(q_table.row(s_next).transpose());
        weighted(s, a) += mdp.transitions[0][a](s, s_next) * (mdp.rewards[0](s, a) + v_next);
      }
    }
  }
  EXPECT_LE((weighted - backup).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(ValueReadout, ConstantNetwork) {
  ReluNet q(linear_class(3, 5.0), {});
  q.biases()[0] << 1.25;
  UniformPolicy pi(2, 2);
  EXPECT_DOUBLE_EQ(value_readout(q, Matrix::Random(1, 10), pi), 1.25);
}

TEST(ValueReadout, PointMassAveragesChosenAction) {
  ReluNet q(linear_class(3, 5.0), {});
  q.weights()[0] << 1.0, 0.0, 2.0;
  PointMassPolicy pi(2, 2, 1);
  Matrix xi(1, 3);
  xi << 0.0, 0.5, 1.0;
  EXPECT_DOUBLE_EQ(value_readout(q, xi, pi), 2.5);
}

TEST(ValueReadout, TwoStatesUniformPolicy) {
  // q(s1, .) = (1, 3), q(s2, .) = (2, 2) with one-hot states.
  NetworkClassParams p = linear_class(4, 5.0);
  p.depth = 2;
  p.width = 2;
  ReluNet q(p, {2});
  q.weights()[0] << 1, 0, 1, 0, 1, 0, 0, 1;
  q.biases()[0] << -1, -1;
  q.weights()[1] << -1, 1;
  q.biases()[1] << 2;
  Matrix xi(2, 2);
  xi << 1, 0, 0, 1;
  const Matrix values = action_values(q, xi, 2);
  EXPECT_DOUBLE_EQ(values(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(values(1, 0), 3.0);
  EXPECT_DOUBLE_EQ(values(0, 1), 2.0);
  EXPECT_DOUBLE_EQ(value_readout(q, xi, UniformPolicy(2, 1)), 2.0);
}

TEST(ValueReadout, EmptySamples) {
  ReluNet q(linear_class(3, 5.0), {});
  EXPECT_THROW(value_readout(q, Matrix(1, 0), UniformPolicy(2, 1)), DomainError);
}

TEST(FqeEstimate, ConstantRewardSingleStep) {
  TorusEnvOptions opts;
  opts.constant_reward = true;
  opts.constant_reward_value = 0.5;
  auto env = make_torus_env(1, 4, 1, 2, 0, opts);
  UniformPolicy pi(2, 1);
  const Rng rng(1);
  const auto data = datasets_for(*env, pi, 500, rng.split(1));
  const auto params = schedule_from_theorem(500, 1.0, 1, 1.0, 1, 1.0, 6, {0.3, 1.0, 8.0});
  TrainConfig cfg{20, 64, 0.01, Optimizer::Momentum, 0.9, 0.1, 0};
  const FqeResult r = fqe_estimate(data, pi, params, cfg, initial_samples(*env, 1000, rng.split(2)), rng.split(3));
  EXPECT_GE(r.v_hat, 0.4);
  EXPECT_LE(r.v_hat, 0.6);
}

TEST(FqeEstimate, SingleStepIsOneRegression) {
  auto env = make_torus_env(1, 4, 1, 2, 2);
  UniformPolicy pi(2, 1);
  const Rng rng(2);
  const auto data = datasets_for(*env, pi, 300, rng.split(1));
  const Matrix xi = initial_samples(*env, 200, rng.split(2));
  const auto params = schedule_from_theorem(300, 1.0, 1, 1.0, 1, 1.0, 6, {0.3, 1.0, 8.0});
  TrainConfig cfg{30, 1000, 0.05, Optimizer::Momentum, 0.9, 1.0, 0};
  const Rng fqe_rng = rng.split(3);
  const FqeResult r = fqe_estimate(data, pi, params, cfg, xi, fqe_rng);

  const Matrix x = encode_inputs(data[0].states, data[0].actions, 2);
  Rng init_rng = fqe_rng.split(1);
  const ReluNet start = init_network(params, init_rng, x.colwise().squaredNorm().mean());
  const FitResult fit = fit_least_squares(start, x, data[0].rewards, cfg);
  EXPECT_TRUE(fit.net == r.q_stack.at(1));
  EXPECT_DOUBLE_EQ(r.v_hat, value_readout(fit.net, xi, pi));
}

TEST(FqeEstimate, TabularChainMatchesDp) {
  const TabularMdp mdp = chain3();
  TabularEnvironment env(mdp);
  Matrix t(3, 2);
  t << 0.3, 0.7, 0.5, 0.5, 0.9, 0.1;
  TabularPolicy target(std::vector<Matrix>(3, t));
  const double v_dp = tabular_dp(mdp, target).value;
  const Rng rng(3);
  const auto data = datasets_for(env, UniformPolicy(2, 3), 10000, rng.split(1));
  TrainConfig cfg{20, 256, 0.01, Optimizer::Momentum, 0.9, 0.01, 0};
  const FqeResult r =
      fqe_estimate(data, target, table_class(mdp), cfg, initial_samples(env, 2000, rng.split(2)), rng.split(3));
  EXPECT_NEAR(r.v_hat, v_dp, 1e-2);
}

TEST(FqeEstimate, DataOrderInvariantWithFullBatch) {
  auto env = make_torus_env(1, 4, 3, 2, 4);
  UniformPolicy pi(2, 3);
  const Rng rng(4);
  auto data = datasets_for(*env, pi, 200, rng.split(1));
  const Matrix xi = initial_samples(*env, 100, rng.split(2));
  const auto params = schedule_from_theorem(200, 1.0, 1, 1.0, 3, 1.0, 6, {0.3, 1.0, 8.0});
  TrainConfig cfg{40, 1000, 0.02, Optimizer::Momentum, 0.9, 1.0, 0};
  const double v = fqe_estimate(data, pi, params, cfg, xi, rng.split(3)).v_hat;

  std::vector<Eigen::Index> perm(200);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  for (auto& ds : data) {
    StepDataset p = ds;
    for (int k = 0; k < 200; ++k) {
      p.states.col(k) = ds.states.col(perm[k]);
      p.next_states.col(k) = ds.next_states.col(perm[k]);
      p.actions[k] = ds.actions[perm[k]];
      p.rewards[k] = ds.rewards[perm[k]];
    }
    ds = std::move(p);
  }
  EXPECT_NEAR(fqe_estimate(data, pi, params, cfg, xi, rng.split(3)).v_hat, v, 1e-12);
}

TEST(FqeEstimate, RangeAndDeterminism) {
  TorusEnvOptions opts;
  opts.reward_amplitude = 1.0;
  auto env = make_torus_env(1, 6, 4, 2, 5, opts);
  const PolicyPtr target = make_torus_target_policy(*env, 1, 2.0);
  const Rng rng(5);
  const auto data = datasets_for(*env, *make_behavior_mixture(target, 0.5), 400, rng.split(1));
  const Matrix xi = initial_samples(*env, 300, rng.split(2));
  const auto params = schedule_from_theorem(400, 1.0, 1, 1.0, 4, 1.0, 8, {0.3, 1.0, 8.0});
  TrainConfig cfg{5, 32, 0.05, Optimizer::Momentum, 0.9, 1.0, 0};
  const FqeResult a = fqe_estimate(data, *target, params, cfg, xi, rng.split(3));
  const FqeResult b = fqe_estimate(data, *target, params, cfg, xi, rng.split(3));
  EXPECT_EQ(a.v_hat, b.v_hat);
  EXPECT_GE(a.v_hat, 0.0);
  EXPECT_LE(a.v_hat, 4.0);
  ASSERT_EQ(a.per_step_train_mse.size(), 4u);
  for (int h = 1; h <= 4; ++h) {
    const Eigen::RowVectorXd out = a.q_stack.at(h).output(Matrix::Random(8, 1000) * 3.0);
    EXPECT_GE(out.minCoeff(), 0.0);
    EXPECT_LE(out.maxCoeff(), 4.0);
    EXPECT_TRUE(satisfies_constraints(a.q_stack.at(h)));
  }
  FqeOptions warm;
  warm.warm_start = true;
  const FqeResult w = fqe_estimate(data, *target, params, cfg, xi, rng.split(3), warm);
  EXPECT_GE(w.v_hat, 0.0);
  EXPECT_LE(w.v_hat, 4.0);
}

TEST(FqeEstimate, MissingOrMislabelledDatasets) {
  auto env = make_torus_env(1, 4, 3, 2, 6);
  UniformPolicy pi(2, 3);
  const Rng rng(6);
  auto data = datasets_for(*env, pi, 50, rng);
  const Matrix xi = initial_samples(*env, 10, rng.split(2));
  const auto params = schedule_from_theorem(50, 1.0, 1, 1.0, 3, 1.0, 6);
  TrainConfig cfg;
  auto missing = data;
  missing.pop_back();
  EXPECT_THROW(fqe_estimate(missing, pi, params, cfg, xi, rng), ConfigError);
  auto swapped = data;
  std::swap(swapped[0], swapped[1]);
  EXPECT_THROW(fqe_estimate(swapped, pi, params, cfg, xi, rng), ConfigError);
  auto wrong_input = params;
  wrong_input.input_dim = 5;
  EXPECT_THROW(fqe_estimate(data, pi, wrong_input, cfg, xi, rng), ConfigError);
}

TEST(FqeEstimate, TorusCloseToMonteCarlo) {
  auto env = make_torus_env(1, 10, 10, 2, 1);
  const PolicyPtr target = make_torus_target_policy(*env, 3, 2.0);
  const Rng rng(7);
  const int k = 20000;
  const auto data = datasets_for(*env, *target, k, rng.split(1));
  const auto params = schedule_from_theorem(k, 1.0, 1, 1.0, 10, 1.0, 12, {0.3, 0.5, 16.0});
  TrainConfig cfg{5, 256, 0.01, Optimizer::Momentum, 0.9, 0.01, 0};
  const FqeResult r = fqe_estimate(data, *target, params, cfg, initial_samples(*env, 20000, rng.split(2)),
                                   rng.split(3));
  const ValueEstimate mc = monte_carlo_value(*env, *target, 100000, rng.split(4));
  EXPECT_LE(std::abs(r.v_hat - mc.mean), 3.0 * mc.std_error + 0.05 * 10);
}

TEST(FqeResultIo, JsonAndQStackRoundTrip) {
  auto env = make_torus_env(1, 4, 2, 2, 8);
  UniformPolicy pi(2, 2);
  const Rng rng(8);
  const auto data = datasets_for(*env, pi, 100, rng);
  const auto params = schedule_from_theorem(100, 1.0, 1, 1.0, 2, 1.0, 6);
  const FqeResult r = fqe_estimate(data, pi, params, TrainConfig{}, initial_samples(*env, 50, rng), rng);
  const auto doc = to_json(r);
  EXPECT_EQ(doc.at("v_hat").get<double>(), r.v_hat);
  EXPECT_EQ(doc.at("per_step_train_mse").size(), 2u);
  EXPECT_TRUE(doc.contains("config"));

  std::stringstream buf;
  save_qstack(buf, r.q_stack);
  const QStack back = load_qstack(buf);
  ASSERT_EQ(back.horizon(), 2);
  for (int h = 1; h <= 2; ++h) EXPECT_TRUE(back.at(h) == r.q_stack.at(h));
  EXPECT_EQ(back.action_values(3, data[0].states), Matrix::Zero(2, 100));
}
