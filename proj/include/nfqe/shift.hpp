#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "nfqe/mdp.hpp"
#include "nfqe/neural.hpp"

namespace nfqe {

/// Empirical sample of a distribution on R^dim, one point per column.
struct SampleSet {
  Matrix points;
  std::string label;

  int size() const { return static_cast<int>(points.cols()); }
  int dim() const { return static_cast<int>(points.rows()); }
  /// Throws DomainError when empty or non-finite.
  void validate() const;
};

/// Denominator floor of the ratio objective; a vanishing denominator yields 0 (0/0 = 0).
inline constexpr double kRatioFloor = 1e-12;

/**
 * (mean_{q1} f)^2 / (mean_{q2} f^2) for the raw network output f. The output clamp is not
 * applied: the ratio is invariant to rescaling f, and the clamp's lower bound would drop
 * every signed function from the class.
 */
double ratio_objective(const ReluNet& f, const SampleSet& q1, const SampleSet& q2);

struct Chi2Options {
  int restarts = 8;
  int workers = 1;
  std::uint64_t seed = 0;
};

struct Chi2Estimate {
  /// max(0, best ratio - 1); a lower bound on the population restricted chi2.
  double value = 0.0;
  int restarts_used = 0;
  double best_objective = 0.0;
  std::vector<double> restart_objectives;
  /// Best-so-far ratio after each ascent step of the winning restart.
  std::vector<double> best_trace;
};

/**
 * sup over networks f in the class of (E_{q1} f)^2 / (E_{q2} f^2) - 1, estimated by
 * gradient ascent on the ratio from `options.restarts` random initializations. After
 * every step the incumbent is rescaled to unit q2 second moment and projected into the
 * class. `opt_cfg.epochs` is the number of ascent steps per restart.
 * Throws ShapeError when the sample sets differ in dimension or mismatch the class input.
 */
Chi2Estimate restricted_chi2(const SampleSet& q1, const SampleSet& q2, const NetworkClassParams& class_params,
                             const TrainConfig& opt_cfg, const Chi2Options& options = {});

/// chi2(N(mu1, I), N(mu2, I)) = exp(|mu1 - mu2|^2) - 1.
double gaussian_chi2(const ConstVectorRef& mu1, const ConstVectorRef& mu2);

/// (1/H) sum_h sqrt(chi2_h + 1). Throws DomainError on a negative entry or an empty input.
double kappa(std::span<const double> per_step_chi2);

/// mean_{q1} g <= sqrt(mean_{q2} g^2 * (1 + chi2_bound)) + 3 / sqrt(min(N1, N2)), with g the
/// clamped network output.
bool lemma1_check(const ReluNet& g, const SampleSet& q1, const SampleSet& q2, double chi2_bound);

struct ShiftReport {
  std::vector<double> per_step_chi2;
  double kappa = 1.0;
  std::vector<Chi2Estimate> diagnostics;
};

/// Per-step restricted chi2 between target visitation samples and behaviour samples.
ShiftReport shift_report(const std::vector<SampleSet>& target_samples, const std::vector<SampleSet>& behavior_samples,
                         const NetworkClassParams& class_params, const TrainConfig& opt_cfg,
                         const Chi2Options& options = {});

/// CSV: h,chi2_estimate,restarts_used,best_objective then a footer row "kappa,<value>,,".
void write_shift_report_csv(std::ostream& out, const ShiftReport& report);

}  // namespace nfqe
