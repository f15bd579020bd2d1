#include "nfqe/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <set>
#include <sstream>

#include "nfqe/errors.hpp"
#include "nfqe/oracles.hpp"
#include "nfqe/parallel.hpp"
#include "nfqe/shift.hpp"

namespace nfqe {

using nlohmann::json;

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::Single: return "single";
    case Mode::SweepK: return "sweep_k";
    case Mode::SweepDim: return "sweep_dim";
    case Mode::SweepShift: return "sweep_shift";
    case Mode::Oracle: return "oracle";
  }
  return "single";
}

Mode parse_mode(const std::string& name) {
  for (Mode m : {Mode::Single, Mode::SweepK, Mode::SweepDim, Mode::SweepShift, Mode::Oracle}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown mode '" + name + "'");
}

void ExperimentConfig::validate() const {
  if (sample_sizes.empty() || seeds.empty() || policy.epsilons.empty()) {
    throw ConfigError("K list, seeds and epsilon list must be nonempty");
  }
  for (long long k : sample_sizes) {
    if (k < 1) throw ConfigError("every K must be >= 1");
  }
  for (double e : policy.epsilons) {
    if (!(e >= 0.0 && e <= 1.0)) throw ConfigError("epsilon must lie in [0, 1]");
  }
  if (mode == Mode::Oracle) {
    if (tabular_path.empty()) throw ConfigError("oracle mode needs 'tabular_mdp'");
  } else {
    if (env.ambient_dims.empty()) throw ConfigError("D list must be nonempty");
    for (int D : env.ambient_dims) {
      if (D < 2 * env.intrinsic_dim) throw ConfigError("every D must be >= 2d");
    }
    if (env.intrinsic_dim < 1 || env.horizon < 1 || env.action_count < 2) {
      throw ConfigError("env needs d >= 1, H >= 1 and at least two actions");
    }
  }
  if (mc_rollouts < 2) throw ConfigError("mc_rollouts must be >= 2");
  if (xi_samples < 1) throw ConfigError("xi_samples must be >= 1");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (!(network.alpha > 0.0)) throw ConfigError("alpha must be positive");
  if (shift.restarts < 1 || shift.samples < 1 || shift.depth < 1 || shift.width < 1) {
    throw ConfigError("shift estimator settings must be positive");
  }
  train.validate();
  shift.optimizer.validate();
}

ExperimentConfig default_config(Mode mode) {
  ExperimentConfig c;
  c.mode = mode;
  c.env.intrinsic_dim = 1;
  c.env.ambient_dims = {10};
  c.env.horizon = 10;
  // Rougher rewards and faster mixing than the environment defaults: at these sizes the
  // estimation error stays well above the Monte Carlo noise floor.
  c.env.options.reward_amplitude = 1.0;
  c.env.options.reward_noise = 1.0;
  c.env.options.noise_scale = 0.5;
  c.env.options.drift_scale = 1.5;
  c.env.options.init_spread = 2.0;
  c.policy.sharpness = 4.0;
  c.network.constants = {0.3, 0.5, 16.0};
  c.train = TrainConfig{5, 256, 0.01, Optimizer::Momentum, 0.9, 0.01, 0};
  switch (mode) {
    case Mode::Single:
      c.sample_sizes = {10000};
      c.seeds = {1};
      c.policy.epsilons = {0.8};
      break;
    case Mode::SweepK:
      c.sample_sizes = {5000, 10000, 20000};
      c.seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
      break;
    case Mode::SweepDim:
      c.env.intrinsic_dim = 2;
      c.env.ambient_dims = {10, 200};
      c.sample_sizes = {10000};
      c.seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
      c.train.epochs = 10;
      break;
    case Mode::SweepShift:
      c.sample_sizes = {10000};
      c.seeds = {1, 2, 3};
      c.policy.epsilons = {0.5, 0.75, 1.0};
      c.shift.restarts = 4;
      break;
    case Mode::Oracle:
      c.env.ambient_dims = {};
      c.sample_sizes = {20000};
      c.seeds = {1};
      c.network.depth = 2;
      c.network.width = 32;
      c.network.budget = 100000;
      c.train = TrainConfig{20, 256, 0.01, Optimizer::Momentum, 0.9, 0.1, 0};
      break;
  }
  return c;
}

namespace {

template <typename T>
void read_if(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& item : obj.items()) {
    if (!allowed.contains(item.key())) throw ConfigError("unknown key '" + item.key() + "' in " + where);
  }
}

void parse_train(const json& obj, TrainConfig& t, const std::string& where) {
  check_keys(obj, {"epochs", "batch_size", "learning_rate", "optimizer", "momentum", "final_lr_fraction", "seed"},
             where);
  read_if(obj, "epochs", t.epochs);
  read_if(obj, "batch_size", t.batch_size);
  read_if(obj, "learning_rate", t.learning_rate);
  read_if(obj, "momentum", t.momentum);
  read_if(obj, "final_lr_fraction", t.final_lr_fraction);
  read_if(obj, "seed", t.seed);
  if (obj.contains("optimizer")) {
    const auto name = obj.at("optimizer").get<std::string>();
    if (name == "momentum") {
      t.optimizer = Optimizer::Momentum;
    } else if (name == "gradient_descent" || name == "gd") {
      t.optimizer = Optimizer::GradientDescent;
    } else {
      throw ConfigError("unknown optimizer '" + name + "'");
    }
  }
}

json train_to_json(const TrainConfig& t) {
  return {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"learning_rate", t.learning_rate},
          {"optimizer", t.optimizer == Optimizer::Momentum ? "momentum" : "gradient_descent"},
          {"momentum", t.momentum},
          {"final_lr_fraction", t.final_lr_fraction},
          {"seed", t.seed}};
}

}  // namespace

ExperimentConfig parse_config(const json& doc, ExperimentConfig c) {
  try {
    check_keys(doc,
               {"mode", "env", "policy", "K", "seeds", "repetitions", "network", "train", "fqe", "mc_rollouts",
                "xi_samples", "shift", "tabular_mdp", "base_seed", "workers", "out"},
               "config");
    if (doc.contains("mode")) c.mode = parse_mode(doc.at("mode").get<std::string>());
    if (doc.contains("env")) {
      const auto& e = doc.at("env");
      check_keys(e,
                 {"d", "D", "H", "action_count", "dynamics_seed", "embedding_seed", "drift_scale", "noise_scale",
                  "noise_truncation", "reward_amplitude", "reward_noise", "init_spread"},
                 "env");
      read_if(e, "d", c.env.intrinsic_dim);
      if (e.contains("D")) {
        c.env.ambient_dims = e.at("D").is_array() ? e.at("D").get<std::vector<int>>()
                                                  : std::vector<int>{e.at("D").get<int>()};
      }
      read_if(e, "H", c.env.horizon);
      read_if(e, "action_count", c.env.action_count);
      read_if(e, "dynamics_seed", c.env.dynamics_seed);
      read_if(e, "embedding_seed", c.env.options.embedding_seed);
      read_if(e, "drift_scale", c.env.options.drift_scale);
      read_if(e, "noise_scale", c.env.options.noise_scale);
      read_if(e, "noise_truncation", c.env.options.noise_truncation);
      read_if(e, "reward_amplitude", c.env.options.reward_amplitude);
      read_if(e, "reward_noise", c.env.options.reward_noise);
      read_if(e, "init_spread", c.env.options.init_spread);
    }
    if (doc.contains("policy")) {
      const auto& p = doc.at("policy");
      check_keys(p, {"target_seed", "sharpness", "epsilon"}, "policy");
      read_if(p, "target_seed", c.policy.target_seed);
      read_if(p, "sharpness", c.policy.sharpness);
      if (p.contains("epsilon")) {
        c.policy.epsilons = p.at("epsilon").is_array() ? p.at("epsilon").get<std::vector<double>>()
                                                       : std::vector<double>{p.at("epsilon").get<double>()};
      }
    }
    if (doc.contains("K")) {
      c.sample_sizes = doc.at("K").is_array() ? doc.at("K").get<std::vector<long long>>()
                                              : std::vector<long long>{doc.at("K").get<long long>()};
    }
    read_if(doc, "seeds", c.seeds);
    if (doc.contains("repetitions")) {
      const int reps = doc.at("repetitions").get<int>();
      if (reps < 1) throw ConfigError("repetitions must be >= 1");
      c.seeds.clear();
      for (int r = 1; r <= reps; ++r) c.seeds.push_back(static_cast<std::uint64_t>(r));
    }
    if (doc.contains("network")) {
      const auto& n = doc.at("network");
      check_keys(n, {"alpha", "c_L", "c_p", "c_I", "depth", "width", "budget"}, "network");
      read_if(n, "alpha", c.network.alpha);
      read_if(n, "c_L", c.network.constants.depth);
      read_if(n, "c_p", c.network.constants.width);
      read_if(n, "c_I", c.network.constants.budget);
      if (n.contains("depth")) c.network.depth = n.at("depth").get<int>();
      if (n.contains("width")) c.network.width = n.at("width").get<int>();
      if (n.contains("budget")) c.network.budget = n.at("budget").get<long long>();
    }
    if (doc.contains("train")) parse_train(doc.at("train"), c.train, "train");
    if (doc.contains("fqe")) {
      check_keys(doc.at("fqe"), {"warm_start"}, "fqe");
      read_if(doc.at("fqe"), "warm_start", c.fqe.warm_start);
    }
    read_if(doc, "mc_rollouts", c.mc_rollouts);
    read_if(doc, "xi_samples", c.xi_samples);
    if (doc.contains("shift")) {
      const auto& s = doc.at("shift");
      check_keys(s, {"depth", "width", "restarts", "samples", "optimizer"}, "shift");
      read_if(s, "depth", c.shift.depth);
      read_if(s, "width", c.shift.width);
      read_if(s, "restarts", c.shift.restarts);
      read_if(s, "samples", c.shift.samples);
      if (s.contains("optimizer")) parse_train(s.at("optimizer"), c.shift.optimizer, "shift.optimizer");
    }
    read_if(doc, "tabular_mdp", c.tabular_path);
    read_if(doc, "base_seed", c.base_seed);
    read_if(doc, "workers", c.workers);
    read_if(doc, "out", c.out_path);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  if (doc.contains("tabular_mdp") && doc.at("tabular_mdp").is_string()) {
    std::filesystem::path p(doc.at("tabular_mdp").get<std::string>());
    if (p.is_relative()) doc["tabular_mdp"] = (std::filesystem::path(path).parent_path() / p).lexically_normal().string();
  }
  return parse_config(doc, std::move(base));
}

json to_json(const ExperimentConfig& c) {
  json network = {{"alpha", c.network.alpha},
                  {"c_L", c.network.constants.depth},
                  {"c_p", c.network.constants.width},
                  {"c_I", c.network.constants.budget}};
  if (c.network.depth) network["depth"] = *c.network.depth;
  if (c.network.width) network["width"] = *c.network.width;
  if (c.network.budget) network["budget"] = *c.network.budget;
  return {
      {"mode", to_string(c.mode)},
      {"env",
       {{"d", c.env.intrinsic_dim},
        {"D", c.env.ambient_dims},
        {"H", c.env.horizon},
        {"action_count", c.env.action_count},
        {"dynamics_seed", c.env.dynamics_seed},
        {"embedding_seed", c.env.options.embedding_seed},
        {"drift_scale", c.env.options.drift_scale},
        {"noise_scale", c.env.options.noise_scale},
        {"noise_truncation", c.env.options.noise_truncation},
        {"reward_amplitude", c.env.options.reward_amplitude},
        {"reward_noise", c.env.options.reward_noise},
        {"init_spread", c.env.options.init_spread}}},
      {"policy",
       {{"target_seed", c.policy.target_seed}, {"sharpness", c.policy.sharpness}, {"epsilon", c.policy.epsilons}}},
      {"K", c.sample_sizes},
      {"seeds", c.seeds},
      {"network", network},
      {"train", train_to_json(c.train)},
      {"fqe", {{"warm_start", c.fqe.warm_start}}},
      {"mc_rollouts", c.mc_rollouts},
      {"xi_samples", c.xi_samples},
      {"shift",
       {{"depth", c.shift.depth},
        {"width", c.shift.width},
        {"restarts", c.shift.restarts},
        {"samples", c.shift.samples},
        {"optimizer", train_to_json(c.shift.optimizer)}}},
      {"tabular_mdp", c.tabular_path},
      {"base_seed", c.base_seed},
      {"workers", c.workers},
      {"out", c.out_path},
  };
}

// ---------------------------------------------------------------------------

namespace {

// Environment, target policy and ground truth shared by every cell with the same D.
struct Problem {
  std::shared_ptr<const Environment> env;
  PolicyPtr target;
  double v_true_mean = 0.0;
  double v_true_se = 0.0;
  int ambient_dim = 0;
  int intrinsic_dim = 0;
};

enum StreamKey : std::uint64_t { kDataStream = 1, kFitStream = 2, kXiStream = 3, kShiftStream = 4, kTruthStream = 5 };

NetworkClassParams network_params(const ExperimentConfig& c, const Environment& env, long long k) {
  const int input_dim = env.obs_dim() + env.action_count();
  NetworkClassParams p = schedule_from_theorem(k, c.network.alpha, env.intrinsic_dim(), env.bound(), env.horizon(),
                                               env.reach(), input_dim, c.network.constants);
  if (c.network.depth) p.depth = *c.network.depth;
  if (c.network.width) p.width = *c.network.width;
  if (c.network.budget) p.budget = *c.network.budget;
  return p;
}

std::vector<Problem> build_problems(const ExperimentConfig& c) {
  std::vector<Problem> problems;
  const Rng truth_rng = Rng(c.base_seed).split(kTruthStream);
  if (c.mode == Mode::Oracle) {
    TabularBundle bundle = load_tabular_bundle(c.tabular_path);
    auto env = std::make_shared<TabularEnvironment>(bundle.mdp);
    PolicyPtr target = bundle.target_policy
                           ? PolicyPtr(std::make_shared<TabularPolicy>(*bundle.target_policy, "tabular-target"))
                           : PolicyPtr(std::make_shared<UniformPolicy>(bundle.mdp.n_actions, bundle.mdp.horizon));
    Problem p;
    p.v_true_mean = tabular_dp(bundle.mdp, *target).value;
    p.env = env;
    p.target = target;
    p.ambient_dim = env->obs_dim();
    p.intrinsic_dim = env->intrinsic_dim();
    problems.push_back(std::move(p));
    return problems;
  }
  for (int D : c.env.ambient_dims) {
    auto env = make_torus_env(c.env.intrinsic_dim, D, c.env.horizon, c.env.action_count, c.env.dynamics_seed,
                              c.env.options);
    Problem p;
    p.target = make_torus_target_policy(*env, c.policy.target_seed, c.policy.sharpness);
    const ValueEstimate truth = monte_carlo_value(*env, *p.target, c.mc_rollouts, truth_rng, c.workers);
    p.v_true_mean = truth.mean;
    p.v_true_se = truth.std_error;
    p.ambient_dim = D;
    p.intrinsic_dim = c.env.intrinsic_dim;
    p.env = std::move(env);
    problems.push_back(std::move(p));
  }
  return problems;
}

SampleSet visitation_samples(const Matrix& states, const std::vector<int>& actions, int action_count,
                             std::string label) {
  return SampleSet{encode_inputs(states, actions, action_count), std::move(label)};
}

double estimate_kappa(const ExperimentConfig& c, const Problem& problem, const std::vector<StepDataset>& datasets,
                      const Rng& cell_rng) {
  const Environment& env = *problem.env;
  const int horizon = env.horizon();
  const int n = c.shift.samples;
  // Target visitation: n target rollouts, step-h (s, a) of each.
  std::vector<Matrix> target_states(horizon, Matrix(env.obs_dim(), n));
  std::vector<std::vector<int>> target_actions(horizon, std::vector<int>(n));
  const Rng roll_rng = cell_rng.split(kShiftStream);
  for (int i = 0; i < n; ++i) {
    Rng stream = roll_rng.split(static_cast<std::uint64_t>(i));
    const Trajectory traj = rollout(env, *problem.target, stream);
    for (int h = 0; h < horizon; ++h) {
      target_states[h].col(i) = traj.states[h].obs;
      target_actions[h][i] = traj.actions[h];
    }
  }
  std::vector<SampleSet> target_sets;
  std::vector<SampleSet> behavior_sets;
  for (int h = 0; h < horizon; ++h) {
    const auto& ds = datasets[h];
    const int m = std::min(n, ds.size());
    std::vector<int> acts(ds.actions.begin(), ds.actions.begin() + m);
    target_sets.push_back(visitation_samples(target_states[h], target_actions[h], env.action_count(), "target"));
    behavior_sets.push_back(visitation_samples(ds.states.leftCols(m), acts, env.action_count(), "behavior"));
  }
  NetworkClassParams cls;
  cls.depth = c.shift.depth;
  cls.width = c.shift.width;
  cls.input_dim = env.obs_dim() + env.action_count();
  cls.budget = dense_parameter_count(cls.input_dim, std::vector<int>(static_cast<std::size_t>(cls.depth - 1), cls.width));
  cls.weight_bound = std::max({env.bound(), static_cast<double>(horizon), std::sqrt(env.intrinsic_dim()),
                               env.reach() * env.reach()});
  cls.output_bound = horizon;
  Chi2Options opts;
  opts.restarts = c.shift.restarts;
  opts.seed = cell_rng.split(kShiftStream).split(1).seed();
  return shift_report(target_sets, behavior_sets, cls, c.shift.optimizer, opts).kappa;
}

struct Cell {
  std::size_t problem = 0;
  double epsilon = 1.0;
  long long sample_size = 0;
  std::uint64_t seed = 0;
};

ResultRow run_cell(const ExperimentConfig& c, const Problem& problem, const Cell& cell) {
  const auto start = std::chrono::steady_clock::now();
  const Environment& env = *problem.env;
  // Streams depend on (base_seed, seed) only, so cells that differ in D or K share the same
  // latent randomness and smaller-K datasets are prefixes of larger ones.
  const Rng cell_rng = Rng(c.base_seed).split(cell.seed);
  const PolicyPtr behavior = make_behavior_mixture(problem.target, cell.epsilon);

  std::vector<StepDataset> datasets;
  for (int h = 1; h <= env.horizon(); ++h) {
    datasets.push_back(generate_step_dataset(env, *behavior, h, static_cast<int>(cell.sample_size),
                                             cell_rng.split(kDataStream)));
  }
  Matrix xi(env.obs_dim(), c.xi_samples);
  Rng xi_rng = cell_rng.split(kXiStream);
  for (Eigen::Index m = 0; m < xi.cols(); ++m) xi.col(m) = env.initial_sample(xi_rng).obs;

  const NetworkClassParams params = network_params(c, env, cell.sample_size);
  const FqeResult fit = fqe_estimate(datasets, *problem.target, params, c.train, xi, cell_rng.split(kFitStream), c.fqe);

  ResultRow row;
  row.mode = to_string(c.mode);
  row.seed = cell.seed;
  row.sample_size = cell.sample_size;
  row.ambient_dim = problem.ambient_dim;
  row.intrinsic_dim = problem.intrinsic_dim;
  row.epsilon = cell.epsilon;
  row.v_hat = fit.v_hat;
  row.v_true_mean = problem.v_true_mean;
  row.v_true_se = problem.v_true_se;
  row.abs_error = std::abs(fit.v_hat - problem.v_true_mean);
  if (c.mode == Mode::SweepShift) row.kappa_estimate = estimate_kappa(c, problem, datasets, cell_rng);
  row.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return row;
}

}  // namespace

std::vector<ResultRow> run_experiment(const ExperimentConfig& config) {
  config.validate();
  const std::vector<Problem> problems = build_problems(config);
  std::vector<Cell> cells;
  for (std::size_t p = 0; p < problems.size(); ++p) {
    for (double eps : config.policy.epsilons) {
      for (long long k : config.sample_sizes) {
        for (std::uint64_t seed : config.seeds) cells.push_back({p, eps, k, seed});
      }
    }
  }
  std::vector<ResultRow> rows(cells.size());
  parallel_for(cells.size(), config.workers,
               [&](std::size_t i) { rows[i] = run_cell(config, problems[cells[i].problem], cells[i]); });
  return rows;
}

// ---------------------------------------------------------------------------

namespace {

std::string format_double(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string tok;
  std::stringstream ss(line);
  while (std::getline(ss, tok, ',')) out.push_back(tok);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << kResultSchema << '\n' << kResultHeader << '\n';
  for (const auto& r : rows) {
    out << r.mode << ',' << r.seed << ',' << r.sample_size << ',' << r.ambient_dim << ',' << r.intrinsic_dim << ','
        << format_double(r.epsilon) << ',' << format_double(r.v_hat) << ',' << format_double(r.v_true_mean) << ','
        << format_double(r.v_true_se) << ',' << format_double(r.abs_error) << ','
        << (r.kappa_estimate ? format_double(*r.kappa_estimate) : std::string()) << ','
        << format_double(r.wall_time_seconds) << '\n';
  }
}

std::vector<ResultRow> read_results_csv(std::istream& in) {
  std::vector<ResultRow> rows;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen) {
      if (line != kResultHeader) throw ValidationError("results csv header does not match the schema");
      header_seen = true;
      continue;
    }
    const auto f = split(line);
    if (f.size() != 12) throw ValidationError("results csv row has " + std::to_string(f.size()) + " fields");
    try {
      ResultRow r;
      r.mode = f[0];
      r.seed = std::stoull(f[1]);
      r.sample_size = std::stoll(f[2]);
      r.ambient_dim = std::stoi(f[3]);
      r.intrinsic_dim = std::stoi(f[4]);
      r.epsilon = std::stod(f[5]);
      r.v_hat = std::stod(f[6]);
      r.v_true_mean = std::stod(f[7]);
      r.v_true_se = std::stod(f[8]);
      r.abs_error = std::stod(f[9]);
      if (!f[10].empty()) r.kappa_estimate = std::stod(f[10]);
      r.wall_time_seconds = std::stod(f[11]);
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw ValidationError("results csv has a malformed number: " + line);
    }
  }
  if (!header_seen) throw ValidationError("results csv has no header row");
  return rows;
}

RateFit fit_rate(const std::vector<ResultRow>& rows) {
  std::map<long long, std::vector<double>> by_k;
  for (const auto& r : rows) by_k[r.sample_size].push_back(r.abs_error);
  if (by_k.size() < 3) throw DomainError("fit_rate needs at least three distinct K values");
  std::vector<double> xs;
  std::vector<double> ys;
  for (auto& [k, errors] : by_k) {
    if (errors.size() < 3) throw DomainError("fit_rate needs at least three repetitions per K");
    std::sort(errors.begin(), errors.end());
    const std::size_t n = errors.size();
    const double median = n % 2 == 1 ? errors[n / 2] : 0.5 * (errors[n / 2 - 1] + errors[n / 2]);
    xs.push_back(std::log(static_cast<double>(k)));
    ys.push_back(std::log(std::max(median, 1e-300)));
  }
  const auto n = static_cast<double>(xs.size());
  const Eigen::Map<const Vector> x(xs.data(), static_cast<Eigen::Index>(xs.size()));
  const Eigen::Map<const Vector> y(ys.data(), static_cast<Eigen::Index>(ys.size()));
  const double x_mean = x.mean();
  const double y_mean = y.mean();
  const double sxx = (x.array() - x_mean).square().sum();
  const double sxy = ((x.array() - x_mean) * (y.array() - y_mean)).sum();
  RateFit fit;
  fit.points = static_cast<int>(xs.size());
  fit.slope = sxy / sxx;
  const double intercept = y_mean - fit.slope * x_mean;
  const double rss = (y.array() - intercept - fit.slope * x.array()).square().sum();
  fit.std_error = std::sqrt(rss / (n - 2.0) / sxx);
  return fit;
}

}  // namespace nfqe
