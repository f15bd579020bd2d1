#pragma once

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nfqe/fqe.hpp"
#include "nfqe/manifold_env.hpp"
#include "nfqe/neural.hpp"

namespace nfqe {

enum class Mode { Single, SweepK, SweepDim, SweepShift, Oracle };

std::string to_string(Mode mode);
Mode parse_mode(const std::string& name);

struct EnvSpec {
  int intrinsic_dim = 1;
  std::vector<int> ambient_dims{10};
  int horizon = 10;
  int action_count = 2;
  std::uint64_t dynamics_seed = 1;
  TorusEnvOptions options;
};

struct PolicySpec {
  std::uint64_t target_seed = 3;
  double sharpness = 2.0;
  /// Weight of the target policy in the behaviour mixture; 1 means on-policy data.
  std::vector<double> epsilons{1.0};
};

struct NetworkSpec {
  double alpha = 1.0;
  ScheduleConstants constants{};
  /// When set, depth / width / budget are used as given instead of the sample-size schedule.
  std::optional<int> depth;
  std::optional<int> width;
  std::optional<long long> budget;
};

/// Settings of the restricted chi2 estimator used for kappa in sweep_shift mode.
struct ShiftSpec {
  int depth = 2;
  int width = 16;
  int restarts = 8;
  int samples = 4000;
  TrainConfig optimizer{200, 4000, 0.05, Optimizer::Momentum, 0.9, 1.0, 0};
};

struct ExperimentConfig {
  Mode mode = Mode::Single;
  EnvSpec env;
  PolicySpec policy;
  std::vector<long long> sample_sizes{5000};
  std::vector<std::uint64_t> seeds{1};
  NetworkSpec network;
  TrainConfig train;
  FqeOptions fqe;
  long long mc_rollouts = 100000;
  long long xi_samples = 100000;
  ShiftSpec shift;
  /// Tabular MDP document for oracle mode.
  std::string tabular_path;
  std::uint64_t base_seed = 0;
  int workers = 1;
  std::string out_path;

  /// Throws ConfigError on an invalid grid or setting.
  void validate() const;
};

/// Default desk-scale configuration for a mode.
ExperimentConfig default_config(Mode mode);

/// Missing keys keep the defaults of `base`. Throws ConfigError on malformed documents.
ExperimentConfig parse_config(const nlohmann::json& doc, ExperimentConfig base);
/// Relative tabular paths resolve against the config file's directory.
ExperimentConfig load_config(const std::string& path, ExperimentConfig base);
nlohmann::json to_json(const ExperimentConfig& config);

struct ResultRow {
  std::string mode;
  std::uint64_t seed = 0;
  long long sample_size = 0;
  int ambient_dim = 0;
  int intrinsic_dim = 0;
  double epsilon = 1.0;
  double v_hat = 0.0;
  double v_true_mean = 0.0;
  double v_true_se = 0.0;
  double abs_error = 0.0;
  std::optional<double> kappa_estimate;
  double wall_time_seconds = 0.0;
};

/// Grid order: D, then epsilon, then K, then seed (innermost). Deterministic given the config.
std::vector<ResultRow> run_experiment(const ExperimentConfig& config);

inline constexpr const char* kResultSchema = "# schema: nfqe-results v1";
inline constexpr const char* kResultHeader =
    "mode,seed,K,D,d,epsilon,v_hat,v_true_mean,v_true_se,abs_error,kappa_estimate,wall_time_seconds";

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows);
std::vector<ResultRow> read_results_csv(std::istream& in);

struct RateFit {
  double slope = 0.0;
  double std_error = 0.0;
  int points = 0;
};

/// OLS slope of log(median abs_error) on log K. Needs >= 3 distinct K with >= 3 rows each;
/// throws DomainError otherwise.
RateFit fit_rate(const std::vector<ResultRow>& rows);

}  // namespace nfqe
