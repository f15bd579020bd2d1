#include "nfqe/oracles.hpp"

#include <cmath>
#include <fstream>

#include "nfqe/errors.hpp"
#include "nfqe/parallel.hpp"

namespace nfqe {

void TabularMdp::validate(double tolerance) const {
  if (n_states < 1 || n_actions < 1 || horizon < 1) throw ValidationError("tabular MDP sizes must be positive");
  if (static_cast<int>(transitions.size()) != horizon || static_cast<int>(rewards.size()) != horizon) {
    throw ValidationError("tabular MDP needs transitions and rewards for every step");
  }
  for (int h = 0; h < horizon; ++h) {
    if (static_cast<int>(transitions[h].size()) != n_actions) throw ValidationError("missing transition matrix");
    for (const auto& p : transitions[h]) {
      if (p.rows() != n_states || p.cols() != n_states) throw ValidationError("transition matrix has wrong shape");
      if ((p.array() < 0.0).any()) throw ValidationError("negative transition probability");
      if (((p.rowwise().sum().array() - 1.0).abs() > tolerance).any()) {
        throw ValidationError("transition row does not sum to 1 at step " + std::to_string(h + 1));
      }
    }
    const Matrix& r = rewards[h];
    if (r.rows() != n_states || r.cols() != n_actions) throw ValidationError("reward table has wrong shape");
    if ((r.array() < 0.0).any() || (r.array() > 1.0).any()) throw ValidationError("reward outside [0, 1]");
  }
  if (initial.size() != n_states || (initial.array() < 0.0).any() || std::abs(initial.sum() - 1.0) > tolerance) {
    throw ValidationError("initial distribution invalid");
  }
}

namespace {

const nlohmann::json& field(const nlohmann::json& doc, const char* key) {
  if (!doc.contains(key)) throw ValidationError(std::string("tabular MDP document lacks '") + key + "'");
  return doc.at(key);
}

}  // namespace

TabularBundle parse_tabular_bundle(const nlohmann::json& doc) {
  try {
    TabularBundle bundle;
    TabularMdp& mdp = bundle.mdp;
    mdp.n_states = field(doc, "n_states").get<int>();
    mdp.n_actions = field(doc, "n_actions").get<int>();
    mdp.horizon = field(doc, "horizon").get<int>();
    bundle.name = doc.value("name", std::string("tabular"));
    const auto p = field(doc, "P").get<std::vector<std::vector<std::vector<std::vector<double>>>>>();
    const auto r = field(doc, "r").get<std::vector<std::vector<std::vector<double>>>>();
    const auto xi = field(doc, "xi").get<std::vector<double>>();
    const auto s_count = static_cast<std::size_t>(mdp.n_states);
    const auto a_count = static_cast<std::size_t>(mdp.n_actions);
    if (p.size() != static_cast<std::size_t>(mdp.horizon) || r.size() != p.size() || xi.size() != s_count) {
      throw ValidationError("tabular MDP arrays do not match the declared sizes");
    }
    for (std::size_t h = 0; h < p.size(); ++h) {
      std::vector<Matrix> per_action(a_count, Matrix(mdp.n_states, mdp.n_states));
      Matrix reward(mdp.n_states, mdp.n_actions);
      if (p[h].size() != s_count || r[h].size() != s_count) throw ValidationError("state count mismatch");
      for (std::size_t s = 0; s < s_count; ++s) {
        if (p[h][s].size() != a_count || r[h][s].size() != a_count) throw ValidationError("action count mismatch");
        for (std::size_t a = 0; a < a_count; ++a) {
          if (p[h][s][a].size() != s_count) throw ValidationError("next-state count mismatch");
          for (std::size_t t = 0; t < s_count; ++t) per_action[a](s, t) = p[h][s][a][t];
          reward(s, a) = r[h][s][a];
        }
      }
      mdp.transitions.push_back(std::move(per_action));
      mdp.rewards.push_back(std::move(reward));
    }
    mdp.initial = Eigen::Map<const Vector>(xi.data(), mdp.n_states);
    mdp.validate();

    if (doc.contains("target_policy")) {
      const auto t = doc.at("target_policy").get<std::vector<std::vector<std::vector<double>>>>();
      if (t.size() != p.size()) throw ValidationError("target policy needs one table per step");
      std::vector<Matrix> tables;
      for (const auto& step : t) {
        if (step.size() != s_count) throw ValidationError("target policy state count mismatch");
        Matrix table(mdp.n_states, mdp.n_actions);
        for (std::size_t s = 0; s < s_count; ++s) {
          if (step[s].size() != a_count) throw ValidationError("target policy action count mismatch");
          for (std::size_t a = 0; a < a_count; ++a) table(s, a) = step[s][a];
        }
        tables.push_back(std::move(table));
      }
      bundle.target_policy = std::move(tables);
    }
    return bundle;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("tabular MDP document: ") + e.what());
  }
}

TabularBundle load_tabular_bundle(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open tabular MDP file: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("tabular MDP file " + path + ": " + e.what());
  }
  return parse_tabular_bundle(doc);
}

nlohmann::json to_json(const TabularMdp& mdp) {
  nlohmann::json p = nlohmann::json::array();
  nlohmann::json r = nlohmann::json::array();
  for (int h = 0; h < mdp.horizon; ++h) {
    nlohmann::json ps = nlohmann::json::array();
    nlohmann::json rs = nlohmann::json::array();
    for (int s = 0; s < mdp.n_states; ++s) {
      nlohmann::json pa = nlohmann::json::array();
      nlohmann::json ra = nlohmann::json::array();
      for (int a = 0; a < mdp.n_actions; ++a) {
        const Eigen::RowVectorXd row = mdp.transitions[h][a].row(s);
        pa.push_back(std::vector<double>(row.data(), row.data() + row.size()));
        ra.push_back(mdp.rewards[h](s, a));
      }
      ps.push_back(pa);
      rs.push_back(ra);
    }
    p.push_back(ps);
    r.push_back(rs);
  }
  return {{"n_states", mdp.n_states}, {"n_actions", mdp.n_actions}, {"horizon", mdp.horizon}, {"P", p}, {"r", r},
          {"xi", std::vector<double>(mdp.initial.data(), mdp.initial.data() + mdp.initial.size())}};
}

// ---------------------------------------------------------------------------

Vector one_hot(int index, int size) {
  Vector v = Vector::Zero(size);
  v[index] = 1.0;
  return v;
}

TabularEnvironment::TabularEnvironment(TabularMdp mdp) : mdp_(std::move(mdp)) { mdp_.validate(); }

double TabularEnvironment::reach() const { return mdp_.n_states > 1 ? std::sqrt(0.5) : 1.0; }

State TabularEnvironment::make_state(int s) const {
  State st;
  st.obs = one_hot(s, mdp_.n_states);
  st.latent = Vector::Constant(1, static_cast<double>(s));
  return st;
}

int TabularEnvironment::state_index(const State& s) { return static_cast<int>(s.latent[0]); }

int TabularEnvironment::sample_categorical(const Eigen::Ref<const Eigen::RowVectorXd>& probs, Rng& rng) const {
  const double u = rng.uniform();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  for (Eigen::Index i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) return static_cast<int>(i);
  }
  return 0;
}

State TabularEnvironment::initial_sample(Rng& rng) const { return make_state(sample_categorical(mdp_.initial.transpose(), rng)); }

State TabularEnvironment::transition(int h, const State& s, int a, Rng& rng) const {
  return make_state(sample_categorical(mdp_.transitions[h - 1][a].row(state_index(s)), rng));
}

double TabularEnvironment::reward(int h, const State& s, int a, Rng&) const { return mean_reward(h, s, a); }

double TabularEnvironment::mean_reward(int h, const State& s, int a) const {
  return mdp_.rewards[h - 1](state_index(s), a);
}

// ---------------------------------------------------------------------------

namespace {

// (n_states x n_actions) table of pi_h(a | s).
Matrix policy_table(const TabularMdp& mdp, const Policy& policy, int h) {
  Matrix table(mdp.n_states, mdp.n_actions);
  for (int s = 0; s < mdp.n_states; ++s) table.row(s) = policy.probs(h, one_hot(s, mdp.n_states)).transpose();
  return table;
}

}  // namespace

Matrix expected_next_value(const TabularMdp& mdp, const Policy& policy, int h, const Matrix& next_q) {
  // V_{h+1}(s') = sum_a' pi_{h+1}(a'|s') Q_{h+1}(s', a')
  const Vector next_v = policy_table(mdp, policy, h + 1).cwiseProduct(next_q).rowwise().sum();
  Matrix out(mdp.n_states, mdp.n_actions);
  for (int a = 0; a < mdp.n_actions; ++a) out.col(a) = mdp.transitions[h - 1][a] * next_v;
  return out;
}

TabularSolution tabular_dp(const TabularMdp& mdp, const Policy& policy) {
  mdp.validate();
  if (policy.action_count() != mdp.n_actions || policy.horizon() < mdp.horizon) {
    throw ConfigError("tabular_dp: policy does not match the MDP");
  }
  TabularSolution sol;
  sol.q.resize(static_cast<std::size_t>(mdp.horizon));
  sol.q.back() = mdp.rewards.back();
  for (int h = mdp.horizon - 1; h >= 1; --h) {
    sol.q[h - 1] = mdp.rewards[h - 1] + expected_next_value(mdp, policy, h, sol.q[h]);
  }
  const Vector v1 = policy_table(mdp, policy, 1).cwiseProduct(sol.q.front()).rowwise().sum();
  sol.value = mdp.initial.dot(v1);
  return sol;
}

double bellman_residual(const TabularMdp& mdp, const Policy& policy, const TabularSolution& solution) {
  double worst = (solution.q.back() - mdp.rewards.back()).cwiseAbs().maxCoeff();
  for (int h = 1; h < mdp.horizon; ++h) {
    const Matrix backup = mdp.rewards[h - 1] + expected_next_value(mdp, policy, h, solution.q[h]);
    worst = std::max(worst, (solution.q[h - 1] - backup).cwiseAbs().maxCoeff());
  }
  return worst;
}

ValueEstimate monte_carlo_value(const Environment& env, const Policy& policy, long long n, const Rng& rng,
                                int workers) {
  if (n < 2) throw DomainError("monte_carlo_value needs at least two rollouts");
  check_compatible(env, policy);
  std::vector<double> returns(static_cast<std::size_t>(n));
  parallel_for(returns.size(), workers, [&](std::size_t i) {
    Rng stream = rng.split(static_cast<std::uint64_t>(i));
    returns[i] = rollout(env, policy, stream).ret;
  });
  double mean = 0.0;
  for (double r : returns) mean += r;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double r : returns) ss += (r - mean) * (r - mean);
  ValueEstimate est;
  est.mean = mean;
  est.std_error = std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
  est.n_rollouts = n;
  return est;
}

}  // namespace nfqe
