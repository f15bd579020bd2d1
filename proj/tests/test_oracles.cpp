#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "nfqe/errors.hpp"
#include "nfqe/oracles.hpp"
#include "test_support.hpp"

using namespace nfqe;
using nfqe::fixtures::CoinEnv;
using nfqe::fixtures::LineEnv;

namespace {

TabularMdp single_state(double r, int horizon) {
  TabularMdp mdp;
  mdp.n_states = 1;
  mdp.n_actions = 1;
  mdp.horizon = horizon;
  for (int h = 0; h < horizon; ++h) {
    mdp.transitions.push_back({Matrix::Ones(1, 1)});
    mdp.rewards.push_back(Matrix::Constant(1, 1, r));
  }
  mdp.initial = Vector::Ones(1);
  return mdp;
}

// s0 -> s1 deterministically, r(s0) = 0.5, r(s1) = 1.
TabularMdp two_state_chain() {
  TabularMdp mdp;
  mdp.n_states = 2;
  mdp.n_actions = 1;
  mdp.horizon = 2;
  Matrix p(2, 2);
  p << 0, 1, 0, 1;
  Matrix r(2, 1);
  r << 0.5, 1.0;
  mdp.transitions = {{p}, {p}};
  mdp.rewards = {r, r};
  mdp.initial = Vector::Unit(2, 0);
  return mdp;
}

TabularMdp random_mdp(int states, int actions, int horizon, Rng rng) {
  TabularMdp mdp;
  mdp.n_states = states;
  mdp.n_actions = actions;
  mdp.horizon = horizon;
  for (int h = 0; h < horizon; ++h) {
    std::vector<Matrix> per_action;
    for (int a = 0; a < actions; ++a) {
      Matrix p(states, states);
      for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = rng.uniform() + 0.01;
      p = p.array().colwise() / p.rowwise().sum().array();
      per_action.push_back(p);
    }
    mdp.transitions.push_back(per_action);
    Matrix r(states, actions);
    for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = rng.uniform();
    mdp.rewards.push_back(r);
  }
  mdp.initial = Vector::Constant(states, 1.0 / states);
  return mdp;
}

std::vector<Matrix> random_tables(int states, int actions, int horizon, Rng rng) {
  std::vector<Matrix> out;
  for (int h = 0; h < horizon; ++h) {
    Matrix t(states, actions);
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform() + 0.05;
    out.push_back(t.array().colwise() / t.rowwise().sum().array());
  }
  return out;
}

// Value by summing over every (s, a) path; independent of backward induction.
double enumerate_value(const TabularMdp& mdp, const std::vector<Matrix>& pi) {
  std::function<double(int, int)> expected_return_from = [&](int h, int s) -> double {
    double total = 0.0;
    for (int a = 0; a < mdp.n_actions; ++a) {
      const double pa = pi[h - 1](s, a);
      if (pa == 0.0) continue;
      double tail = 0.0;
      if (h < mdp.horizon) {
        for (int t = 0; t < mdp.n_states; ++t) {
          const double pt = mdp.transitions[h - 1][a](s, t);
          if (pt > 0.0) tail += pt * expected_return_from(h + 1, t);
        }
      }
      total += pa * (mdp.rewards[h - 1](s, a) + tail);
    }
    return total;
  };
  double v = 0.0;
  for (int s = 0; s < mdp.n_states; ++s) v += mdp.initial[s] * expected_return_from(1, s);
  return v;
}

std::string bundled(const std::string& name) { return std::string(NFQE_DATA_DIR) + "/tabular/" + name + ".json"; }

}  // namespace

TEST(TabularDp, SingleStateConstantReward) {
  const TabularMdp mdp = single_state(0.7, 1);
  const UniformPolicy pi(1, 1);
  EXPECT_NEAR(tabular_dp(mdp, pi).value, 0.7, 1e-12);
  EXPECT_NEAR(tabular_dp(single_state(0.7, 5), UniformPolicy(1, 5)).value, 3.5, 1e-12);
}

TEST(TabularDp, TwoStateChain) {
  const TabularMdp mdp = two_state_chain();
  const TabularSolution sol = tabular_dp(mdp, UniformPolicy(1, 2));
  EXPECT_NEAR(sol.value, 1.5, 1e-12);
  EXPECT_NEAR(sol.q[0](0, 0), 1.5, 1e-12);
  EXPECT_NEAR(sol.q[1](1, 0), 1.0, 1e-12);
}

TEST(TabularDp, AgreesWithPathEnumeration) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Rng rng(seed);
    const TabularMdp mdp = random_mdp(3, 2, 4, rng.split(1));
    const auto tables = random_tables(3, 2, 4, rng.split(2));
    const TabularPolicy pi(tables);
    EXPECT_NEAR(tabular_dp(mdp, pi).value, enumerate_value(mdp, tables), 1e-10) << "seed " << seed;
  }
}

TEST(TabularDp, BellmanResidualVanishes) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Rng rng(100 + seed);
    const TabularMdp mdp = random_mdp(5, 3, 6, rng.split(1));
    const TabularPolicy pi(random_tables(5, 3, 6, rng.split(2)));
    TabularSolution sol = tabular_dp(mdp, pi);
    EXPECT_LE(bellman_residual(mdp, pi, sol), 1e-12);
    sol.q[2](1, 1) += 0.25;
    EXPECT_NEAR(bellman_residual(mdp, pi, sol), 0.25, 1e-12);
  }
}

TEST(TabularDp, ValueWithinHorizonBounds) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Rng rng(200 + seed);
    const TabularMdp mdp = random_mdp(4, 2, 5, rng.split(1));
    const TabularSolution sol = tabular_dp(mdp, TabularPolicy(random_tables(4, 2, 5, rng.split(2))));
    EXPECT_GE(sol.value, 0.0);
    EXPECT_LE(sol.value, 5.0);
    for (int h = 1; h <= 5; ++h) EXPECT_LE(sol.q[h - 1].maxCoeff(), 5.0 - h + 1 + 1e-12);
  }
}

TEST(TabularDp, PolicyMismatchIsConfigError) {
  EXPECT_THROW(tabular_dp(two_state_chain(), UniformPolicy(2, 2)), ConfigError);
  EXPECT_THROW(tabular_dp(two_state_chain(), UniformPolicy(1, 1)), ConfigError);
}

TEST(TabularMdp, ValidationRejectsBadModels) {
  TabularMdp bad_row = two_state_chain();
  bad_row.transitions[0][0](0, 1) = 0.9;
  EXPECT_THROW(bad_row.validate(), ValidationError);

  TabularMdp bad_reward = two_state_chain();
  bad_reward.rewards[1](0, 0) = 1.5;
  EXPECT_THROW(bad_reward.validate(), ValidationError);

  TabularMdp bad_xi = two_state_chain();
  bad_xi.initial << 0.5, 0.6;
  EXPECT_THROW(bad_xi.validate(), ValidationError);

  TabularMdp short_horizon = two_state_chain();
  short_horizon.rewards.pop_back();
  EXPECT_THROW(short_horizon.validate(), ValidationError);

  TabularMdp slightly_off = two_state_chain();
  slightly_off.transitions[0][0](0, 1) = 1.0 + 1e-11;
  EXPECT_NO_THROW(slightly_off.validate());
}

TEST(TabularBundle, BundledFilesLoadAndSolve) {
  for (const char* name : {"chain5", "ring6", "random8"}) {
    const TabularBundle b = load_tabular_bundle(bundled(name));
    const auto tables = b.target_policy.value_or(nfqe::fixtures::constant_tables(
        b.mdp.horizon, b.mdp.n_states, Eigen::RowVectorXd::Constant(b.mdp.n_actions, 1.0 / b.mdp.n_actions)));
    const TabularPolicy pi(tables);
    const TabularSolution sol = tabular_dp(b.mdp, pi);
    EXPECT_NEAR(sol.value, enumerate_value(b.mdp, tables), 1e-10) << name;
    EXPECT_LE(bellman_residual(b.mdp, pi, sol), 1e-12) << name;
  }
}

TEST(TabularBundle, JsonRoundTrip) {
  const TabularMdp mdp = random_mdp(4, 3, 3, Rng(7));
  const TabularBundle back = parse_tabular_bundle(to_json(mdp));
  ASSERT_EQ(back.mdp.n_states, 4);
  for (int h = 0; h < 3; ++h) {
    EXPECT_EQ(back.mdp.rewards[h], mdp.rewards[h]);
    for (int a = 0; a < 3; ++a) EXPECT_EQ(back.mdp.transitions[h][a], mdp.transitions[h][a]);
  }
  EXPECT_EQ(back.mdp.initial, mdp.initial);
  EXPECT_FALSE(back.target_policy.has_value());
}

TEST(TabularBundle, MalformedDocumentsAreValidationErrors) {
  nlohmann::json doc = to_json(two_state_chain());
  doc.erase("xi");
  EXPECT_THROW(parse_tabular_bundle(doc), ValidationError);

  doc = to_json(two_state_chain());
  doc["n_states"] = 3;
  EXPECT_THROW(parse_tabular_bundle(doc), ValidationError);

  doc = to_json(two_state_chain());
  doc["P"] = "not an array";
  EXPECT_THROW(parse_tabular_bundle(doc), ValidationError);

  doc = to_json(two_state_chain());
  doc["target_policy"] = {{{1.0}}};
  EXPECT_THROW(parse_tabular_bundle(doc), ValidationError);
}

TEST(TabularEnvironment, OneHotObservations) {
  const TabularEnvironment env(two_state_chain());
  Rng rng(1);
  const State s = env.initial_sample(rng);
  EXPECT_EQ(s.obs, Vector::Unit(2, 0));
  const State t = env.transition(1, s, 0, rng);
  EXPECT_EQ(TabularEnvironment::state_index(t), 1);
  EXPECT_DOUBLE_EQ(env.reward(1, s, 0, rng), 0.5);
  EXPECT_NEAR(env.reach(), std::sqrt(0.5), 1e-15);
}

TEST(MonteCarlo, DeterministicReturnHasZeroError) {
  const LineEnv env(3, 1, 1.0);
  const ValueEstimate est = monte_carlo_value(env, UniformPolicy(1, 3), 1000, Rng(4));
  EXPECT_DOUBLE_EQ(est.mean, 3.0);
  EXPECT_DOUBLE_EQ(est.std_error, 0.0);
  EXPECT_EQ(est.n_rollouts, 1000);
}

TEST(MonteCarlo, BernoulliRewardsCentreOnMean) {
  const CoinEnv env(10, 0.5);
  const ValueEstimate est = monte_carlo_value(env, UniformPolicy(2, 10), 100000, Rng(5));
  EXPECT_NEAR(est.mean, 5.0, 0.05);
  // Return is Binomial(10, 0.5): sd sqrt(2.5).
  EXPECT_NEAR(est.std_error, std::sqrt(2.5 / 100000.0), 2e-4);
}

TEST(MonteCarlo, TooFewRolloutsIsDomainError) {
  const CoinEnv env(2, 0.5);
  EXPECT_THROW(monte_carlo_value(env, UniformPolicy(2, 2), 1, Rng(0)), DomainError);
}

TEST(MonteCarlo, IndependentOfWorkerCount) {
  const CoinEnv env(4, 0.3);
  const UniformPolicy pi(2, 4);
  const ValueEstimate one = monte_carlo_value(env, pi, 5000, Rng(8), 1);
  const ValueEstimate four = monte_carlo_value(env, pi, 5000, Rng(8), 4);
  EXPECT_EQ(one.mean, four.mean);
  EXPECT_EQ(one.std_error, four.std_error);
}

TEST(MonteCarlo, MatchesDpOnTabularMdp) {
  const TabularBundle b = load_tabular_bundle(bundled("random8"));
  const TabularEnvironment env(b.mdp);
  const TabularPolicy pi(*b.target_policy);
  const double exact = tabular_dp(b.mdp, pi).value;
  const ValueEstimate est = monte_carlo_value(env, pi, 100000, Rng(9));
  EXPECT_LE(std::abs(est.mean - exact), 4.0 * est.std_error);
}
