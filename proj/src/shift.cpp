#include "nfqe/shift.hpp"

#include <cmath>
#include <ostream>

#include "nfqe/errors.hpp"
#include "nfqe/parallel.hpp"

namespace nfqe {

void SampleSet::validate() const {
  if (points.cols() < 1) throw DomainError("sample set '" + label + "' is empty");
  if (!points.allFinite()) throw DomainError("sample set '" + label + "' has non-finite entries");
}

namespace {

struct Moments {
  double first = 0.0;   // mean_{q1} f
  double second = 0.0;  // mean_{q2} f^2
};

Moments moments(const ReluNet& f, const SampleSet& q1, const SampleSet& q2) {
  Moments m;
  m.first = f.raw_output(q1.points).mean();
  m.second = f.raw_output(q2.points).squaredNorm() / static_cast<double>(q2.size());
  return m;
}

double ratio_of(const Moments& m) {
  // 0/0 = 0; with the floor a vanishing denominator can only occur together with f ~ 0.
  return m.first * m.first / std::max(m.second, kRatioFloor);
}

// Rescale the output layer so mean_{q2} f^2 = 1.
void normalize_second_moment(ReluNet& f, const SampleSet& q2) {
  const double second = f.raw_output(q2.points).squaredNorm() / static_cast<double>(q2.size());
  if (second <= kRatioFloor) return;
  const double scale = 1.0 / std::sqrt(second);
  f.weights().back() *= scale;
  f.biases().back() *= scale;
}

Matrix subsample(const Matrix& points, int count, Rng& rng) {
  if (count >= points.cols()) return points;
  Matrix out(points.rows(), count);
  for (int i = 0; i < count; ++i) out.col(i) = points.col(static_cast<Eigen::Index>(rng.index(points.cols())));
  return out;
}

struct RestartOutcome {
  double best_ratio = 0.0;
  std::vector<double> trace;
};

RestartOutcome ascend(const SampleSet& q1, const SampleSet& q2, const NetworkClassParams& params,
                      const TrainConfig& cfg, Rng rng) {
  ReluNet f = init_network(params, rng);
  normalize_second_moment(f, q2);
  project_constraints_in_place(f);

  NetworkGradient<double> velocity;
  for (std::size_t i = 0; i < f.weights().size(); ++i) {
    velocity.weights.push_back(Matrix::Zero(f.weights()[i].rows(), f.weights()[i].cols()));
    velocity.biases.push_back(Vector::Zero(f.biases()[i].size()));
  }
  const double beta = cfg.optimizer == Optimizer::Momentum ? cfg.momentum : 0.0;

  RestartOutcome out;
  out.best_ratio = ratio_of(moments(f, q1, q2));
  out.trace.reserve(static_cast<std::size_t>(cfg.epochs));
  for (int step = 0; step < cfg.epochs; ++step) {
    const double progress = cfg.epochs > 1 ? static_cast<double>(step) / (cfg.epochs - 1) : 0.0;
    const double lr = cfg.learning_rate * (1.0 - (1.0 - cfg.final_lr_fraction) * progress);
    const Matrix x1 = subsample(q1.points, cfg.batch_size, rng);
    const Matrix x2 = subsample(q2.points, cfg.batch_size, rng);
    const Eigen::RowVectorXd f1 = f.raw_output(x1);
    const Eigen::RowVectorXd f2 = f.raw_output(x2);
    const double m1 = f1.mean();
    const double m2 = std::max(f2.squaredNorm() / static_cast<double>(f2.size()), kRatioFloor);

    // d(m1^2 / m2) = (2 m1 / m2) dm1 - (m1^2 / m2^2) dm2
    const Eigen::RowVectorXd g1 = Eigen::RowVectorXd::Constant(f1.size(), 2.0 * m1 / m2 / f1.size());
    const Eigen::RowVectorXd g2 = (-(m1 * m1) / (m2 * m2) * 2.0 / f2.size()) * f2;
    const auto grad1 = backward<double>(f, x1, g1);
    const auto grad2 = backward<double>(f, x2, g2);
    for (std::size_t i = 0; i < f.weights().size(); ++i) {
      velocity.weights[i] = beta * velocity.weights[i] + lr * (grad1.weights[i] + grad2.weights[i]);
      velocity.biases[i] = beta * velocity.biases[i] + lr * (grad1.biases[i] + grad2.biases[i]);
      f.weights()[i] += velocity.weights[i];
      f.biases()[i] += velocity.biases[i];
    }
    normalize_second_moment(f, q2);
    project_constraints_in_place(f);
    out.best_ratio = std::max(out.best_ratio, ratio_of(moments(f, q1, q2)));
    out.trace.push_back(out.best_ratio);
  }
  return out;
}

}  // namespace

double ratio_objective(const ReluNet& f, const SampleSet& q1, const SampleSet& q2) {
  q1.validate();
  q2.validate();
  return ratio_of(moments(f, q1, q2));
}

Chi2Estimate restricted_chi2(const SampleSet& q1, const SampleSet& q2, const NetworkClassParams& class_params,
                             const TrainConfig& opt_cfg, const Chi2Options& options) {
  q1.validate();
  q2.validate();
  if (q1.dim() != q2.dim()) throw ShapeError("restricted_chi2: sample sets differ in dimension");
  if (class_params.input_dim != q1.dim()) throw ShapeError("restricted_chi2: class input_dim != sample dimension");
  opt_cfg.validate();
  if (options.restarts < 1) throw ConfigError("restricted_chi2 needs at least one restart");

  std::vector<RestartOutcome> outcomes(static_cast<std::size_t>(options.restarts));
  const Rng root(mix64(options.seed ^ opt_cfg.seed));
  parallel_for(outcomes.size(), options.workers, [&](std::size_t r) {
    outcomes[r] = ascend(q1, q2, class_params, opt_cfg, root.split(static_cast<std::uint64_t>(r)));
  });

  Chi2Estimate est;
  est.restarts_used = options.restarts;
  std::size_t winner = 0;
  for (std::size_t r = 0; r < outcomes.size(); ++r) {
    est.restart_objectives.push_back(outcomes[r].best_ratio);
    if (outcomes[r].best_ratio > outcomes[winner].best_ratio) winner = r;
  }
  est.best_objective = outcomes[winner].best_ratio;
  est.best_trace = std::move(outcomes[winner].trace);
  est.value = std::max(0.0, est.best_objective - 1.0);
  return est;
}

double gaussian_chi2(const ConstVectorRef& mu1, const ConstVectorRef& mu2) {
  if (mu1.size() != mu2.size()) throw ShapeError("gaussian_chi2: mean vectors differ in dimension");
  return std::expm1((mu1 - mu2).squaredNorm());
}

double kappa(std::span<const double> per_step_chi2) {
  if (per_step_chi2.empty()) throw DomainError("kappa needs at least one step");
  double total = 0.0;
  for (double c : per_step_chi2) {
    if (!(c >= 0.0)) throw DomainError("kappa: chi2 entries must be nonnegative");
    total += std::sqrt(c + 1.0);
  }
  return total / static_cast<double>(per_step_chi2.size());
}

bool lemma1_check(const ReluNet& g, const SampleSet& q1, const SampleSet& q2, double chi2_bound) {
  q1.validate();
  q2.validate();
  const double lhs = g.output(q1.points).mean();
  const double second = g.output(q2.points).squaredNorm() / static_cast<double>(q2.size());
  const double slack = 3.0 / std::sqrt(static_cast<double>(std::min(q1.size(), q2.size())));
  return lhs <= std::sqrt(second * (1.0 + chi2_bound)) + slack;
}

ShiftReport shift_report(const std::vector<SampleSet>& target_samples, const std::vector<SampleSet>& behavior_samples,
                         const NetworkClassParams& class_params, const TrainConfig& opt_cfg,
                         const Chi2Options& options) {
  if (target_samples.size() != behavior_samples.size() || target_samples.empty()) {
    throw ConfigError("shift_report needs matching, nonempty per-step sample lists");
  }
  ShiftReport report;
  for (std::size_t h = 0; h < target_samples.size(); ++h) {
    Chi2Options step_options = options;
    step_options.seed = mix64(options.seed + h + 1);
    report.diagnostics.push_back(
        restricted_chi2(target_samples[h], behavior_samples[h], class_params, opt_cfg, step_options));
    report.per_step_chi2.push_back(report.diagnostics.back().value);
  }
  report.kappa = kappa(report.per_step_chi2);
  return report;
}

void write_shift_report_csv(std::ostream& out, const ShiftReport& report) {
  const auto old_precision = out.precision(17);
  out << "h,chi2_estimate,restarts_used,best_objective\n";
  for (std::size_t h = 0; h < report.per_step_chi2.size(); ++h) {
    const int restarts = h < report.diagnostics.size() ? report.diagnostics[h].restarts_used : 0;
    const double best = h < report.diagnostics.size() ? report.diagnostics[h].best_objective : 0.0;
    out << h + 1 << ',' << report.per_step_chi2[h] << ',' << restarts << ',' << best << '\n';
  }
  out << "kappa," << report.kappa << ",,\n";
  out.precision(old_precision);
}

}  // namespace nfqe
