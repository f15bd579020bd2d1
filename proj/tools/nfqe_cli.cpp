// nfqe: run FQE experiments and emit CSV rows.
//
//   nfqe sweep-k --config configs/sweep_k.json --out sweep_k.csv
//   nfqe rate --in sweep_k.csv

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "nfqe/errors.hpp"
#include "nfqe/harness.hpp"

namespace {

struct Flags {
  std::string config;
  std::string out;
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
};

void add_flags(CLI::App* cmd, Flags& flags) {
  cmd->add_option("--config", flags.config, "JSON experiment config");
  cmd->add_option("--out", flags.out, "CSV output path (stdout when omitted)");
  cmd->add_option("--workers", flags.workers, "concurrent grid cells")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", flags.seed, "base seed");
}

int run_mode(std::optional<nfqe::Mode> mode, const Flags& flags) {
  nfqe::ExperimentConfig cfg = nfqe::default_config(mode.value_or(nfqe::Mode::Single));
  if (!flags.config.empty()) cfg = nfqe::load_config(flags.config, cfg);
  if (mode) cfg.mode = *mode;
  if (flags.workers) cfg.workers = *flags.workers;
  if (flags.seed) cfg.base_seed = *flags.seed;
  if (!flags.out.empty()) cfg.out_path = flags.out;
  cfg.validate();

  std::ofstream file;
  if (!cfg.out_path.empty()) {
    file.open(cfg.out_path);
    if (!file) throw std::runtime_error("cannot open output file " + cfg.out_path);
  }
  const auto rows = nfqe::run_experiment(cfg);
  std::ostream& out = cfg.out_path.empty() ? std::cout : file;
  nfqe::write_results_csv(out, rows);
  out.flush();
  if (!out) throw std::runtime_error("failed writing results");
  return 0;
}

int run_rate(const std::string& in_path) {
  std::ifstream in(in_path);
  if (!in) throw std::runtime_error("cannot open " + in_path);
  const auto fit = nfqe::fit_rate(nfqe::read_results_csv(in));
  std::cout.precision(10);
  std::cout << "slope,std_error,points\n" << fit.slope << ',' << fit.std_error << ',' << fit.points << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural fitted Q-evaluation experiments"};
  app.require_subcommand(1);

  Flags flags;
  std::string rate_in;
  struct Sub {
    const char* name;
    std::optional<nfqe::Mode> mode;
    const char* help;
  };
  const Sub subs[] = {
      {"run", std::nullopt, "run the mode named in the config (default single)"},
      {"sweep-k", nfqe::Mode::SweepK, "sample-size sweep"},
      {"sweep-dim", nfqe::Mode::SweepDim, "ambient-dimension sweep"},
      {"sweep-shift", nfqe::Mode::SweepShift, "behaviour-mixture sweep with kappa estimates"},
      {"oracle", nfqe::Mode::Oracle, "FQE on a tabular MDP against exact DP"},
  };
  std::vector<std::pair<CLI::App*, std::optional<nfqe::Mode>>> mode_cmds;
  for (const auto& s : subs) {
    CLI::App* cmd = app.add_subcommand(s.name, s.help);
    add_flags(cmd, flags);
    mode_cmds.emplace_back(cmd, s.mode);
  }
  CLI::App* rate = app.add_subcommand("rate", "fit log median error against log K");
  rate->add_option("--in,input", rate_in, "results CSV from sweep-k")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (rate->parsed()) return run_rate(rate_in);
    for (const auto& [cmd, mode] : mode_cmds) {
      if (cmd->parsed()) return run_mode(mode, flags);
    }
  } catch (const nfqe::ConfigError& e) {
    std::cerr << "nfqe: invalid configuration: " << e.what() << '\n';
    return 2;
  } catch (const nfqe::ValidationError& e) {
    std::cerr << "nfqe: validation failed: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "nfqe: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
