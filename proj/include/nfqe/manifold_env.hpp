#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <vector>

#include "nfqe/mdp.hpp"

namespace nfqe {

/**
 * Flat torus T^d embedded in R^D (D >= 2d).
 *
 * Latent coordinate i maps to the unit-circle pair (cos z_i, sin z_i) in slots (2i, 2i+1)
 * of a pre-rotation vector; the remaining D - 2d slots are zero. A fixed orthogonal
 * rotation then spreads the d circles over all D ambient coordinates. Every embedded point
 * has Euclidean norm sqrt(d), sup-norm at most 1, and the manifold has reach 1.
 */
class TorusEmbedding {
 public:
  /// Random orthogonal rotation drawn from `rotation_seed` (QR of a Gaussian matrix).
  TorusEmbedding(int intrinsic_dim, int ambient_dim, std::uint64_t rotation_seed);
  TorusEmbedding(int intrinsic_dim, Matrix rotation);

  static TorusEmbedding identity(int intrinsic_dim, int ambient_dim);

  int intrinsic_dim() const { return intrinsic_dim_; }
  int ambient_dim() const { return static_cast<int>(rotation_.rows()); }
  double radius() const { return 1.0; }
  const Matrix& rotation() const { return rotation_; }

  Vector embed(const ConstVectorRef& z) const;
  /// The 2d circle coordinates (cos z_1, sin z_1, ...) recovered from an observation.
  Vector circle_coordinates(const ConstVectorRef& x) const;

 private:
  int intrinsic_dim_;
  Matrix rotation_;
};

/// Knobs of the synthetic torus dynamics. Defaults give smooth, moderately mixing dynamics.
struct TorusEnvOptions {
  double drift_scale = 0.6;        // sup of |drift_h(z, a)| per coordinate
  double noise_scale = 0.15;       // std of latent Gaussian noise before truncation
  double noise_truncation = 2.0;   // truncate noise at this many standard deviations
  double reward_amplitude = 0.4;   // sup of the trig polynomial in the mean reward
  double reward_noise = 0.5;       // relative half-width of the symmetric reward noise
  double init_spread = 0.6;        // std of the wrapped initial latent distribution
  bool constant_reward = false;    // noiseless reward fixed at constant_reward_value
  double constant_reward_value = 0.5;
  bool zero_dynamics = false;      // no drift and no noise
  std::uint64_t embedding_seed = 0;
  bool identity_rotation = false;
};

/**
 * Torus environment: z_{h+1} = z_h + drift_h(z_h, a) + noise (mod 2*pi),
 * r_h(z, a) = 0.5 * (1 + trig polynomial), observation = embed(z).
 *
 * drift and the reward polynomial are first-order trigonometric polynomials with seeded
 * coefficients, so mean rewards and transition densities are smooth on the torus.
 */
class TorusEnvironment final : public Environment {
 public:
  TorusEnvironment(int intrinsic_dim, int ambient_dim, int horizon, int action_count, std::uint64_t dynamics_seed,
                   const TorusEnvOptions& options);

  int horizon() const override { return horizon_; }
  int action_count() const override { return action_count_; }
  int obs_dim() const override { return embedding_.ambient_dim(); }
  int intrinsic_dim() const override { return embedding_.intrinsic_dim(); }
  double bound() const override { return 1.0; }
  double reach() const override { return 1.0; }

  State initial_sample(Rng& rng) const override;
  State transition(int h, const State& s, int a, Rng& rng) const override;
  double reward(int h, const State& s, int a, Rng& rng) const override;
  double mean_reward(int h, const State& s, int a) const override;

  const TorusEmbedding& embedding() const { return embedding_; }
  Vector latent_drift(int h, const ConstVectorRef& z, int a) const;
  double latent_mean_reward(int h, const ConstVectorRef& z, int a) const;
  State make_state(const ConstVectorRef& z) const;

 private:
  // Coefficients of c0 + sum_j (c_cos[j] cos z_j + c_sin[j] sin z_j).
  struct TrigPoly {
    double constant = 0.0;
    Vector cos_coef;
    Vector sin_coef;
    double eval(const ConstVectorRef& z) const;
  };

  int horizon_;
  int action_count_;
  TorusEmbedding embedding_;
  TorusEnvOptions options_;
  Vector init_center_;
  // drift_[h][a][i], reward_[h][a]
  std::vector<std::vector<std::vector<TrigPoly>>> drift_;
  std::vector<std::vector<TrigPoly>> reward_;
};

/// Throws ConfigError when D < 2d, H < 1 or fewer than two actions.
std::shared_ptr<TorusEnvironment> make_torus_env(int intrinsic_dim, int ambient_dim, int horizon, int action_count,
                                                 std::uint64_t dynamics_seed, const TorusEnvOptions& options = {});

/**
 * Scripted smooth target policy for a torus environment: softmax of
 * sharpness * C_h * circle_coordinates(obs), with seeded C_h. The policy depends on the
 * latent state only, so the same seed gives the same latent policy for every ambient D.
 */
PolicyPtr make_torus_target_policy(const TorusEnvironment& env, std::uint64_t seed, double sharpness);

/// K transition tuples for one step, one column per tuple.
struct StepDataset {
  int h = 1;
  Matrix states;       // D x K
  std::vector<int> actions;
  Matrix next_states;  // D x K
  Vector rewards;      // K

  int size() const { return static_cast<int>(actions.size()); }
  int obs_dim() const { return static_cast<int>(states.rows()); }
};

/**
 * Episode slicing: roll K independent episodes under `behavior` up to step h and keep each
 * episode's h-th transition (s_h, a_h, s_{h+1}, r_h). Episode k draws only from the
 * substream rng.split({h, k}).
 */
StepDataset generate_step_dataset(const Environment& env, const Policy& behavior, int h, int count, const Rng& rng,
                                  int workers = 1);

/// Layout: header (h, K, D) then rows s[0..D), a, s'[0..D), r. Both formats round-trip bit-exactly.
enum class DatasetFormat { Binary, Csv };

void write_step_dataset(std::ostream& out, const StepDataset& ds, DatasetFormat format);
StepDataset read_step_dataset(std::istream& in, DatasetFormat format);

}  // namespace nfqe
