#include "nfqe/manifold_env.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>

#include "nfqe/errors.hpp"
#include "nfqe/parallel.hpp"

namespace nfqe {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_angle(double z) {
  double w = std::fmod(z, kTwoPi);
  if (w < 0.0) w += kTwoPi;
  return w;
}

double truncated_normal(Rng& rng, double truncation) {
  for (;;) {
    const double n = rng.normal();
    if (std::abs(n) <= truncation) return n;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// TorusEmbedding

TorusEmbedding::TorusEmbedding(int intrinsic_dim, int ambient_dim, std::uint64_t rotation_seed)
    : intrinsic_dim_(intrinsic_dim) {
  if (intrinsic_dim < 1 || ambient_dim < 2 * intrinsic_dim) {
    throw ConfigError("torus embedding needs D >= 2d >= 2");
  }
  Rng rng(rotation_seed);
  Matrix gaussian(ambient_dim, ambient_dim);
  for (Eigen::Index j = 0; j < gaussian.cols(); ++j) {
    for (Eigen::Index i = 0; i < gaussian.rows(); ++i) gaussian(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Matrix> qr(gaussian);
  Matrix q = qr.householderQ();
  // Sign-fix columns so the rotation is a deterministic function of the Gaussian draw.
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  rotation_ = std::move(q);
}

TorusEmbedding::TorusEmbedding(int intrinsic_dim, Matrix rotation)
    : intrinsic_dim_(intrinsic_dim), rotation_(std::move(rotation)) {
  if (rotation_.rows() != rotation_.cols()) throw ShapeError("rotation must be square");
  if (intrinsic_dim < 1 || rotation_.rows() < 2 * intrinsic_dim) {
    throw ConfigError("torus embedding needs D >= 2d >= 2");
  }
  const Matrix gram = rotation_ * rotation_.transpose();
  if (!gram.isApprox(Matrix::Identity(gram.rows(), gram.cols()), 1e-10)) {
    throw ConfigError("rotation is not orthogonal");
  }
}

TorusEmbedding TorusEmbedding::identity(int intrinsic_dim, int ambient_dim) {
  return TorusEmbedding(intrinsic_dim, Matrix::Identity(ambient_dim, ambient_dim));
}

Vector TorusEmbedding::embed(const ConstVectorRef& z) const {
  Vector circles(2 * intrinsic_dim_);
  for (int i = 0; i < intrinsic_dim_; ++i) {
    circles[2 * i] = std::cos(z[i]);
    circles[2 * i + 1] = std::sin(z[i]);
  }
  return rotation_.leftCols(2 * intrinsic_dim_) * circles;
}

Vector TorusEmbedding::circle_coordinates(const ConstVectorRef& x) const {
  if (x.size() != rotation_.rows()) throw ShapeError("observation dimension does not match embedding");
  return rotation_.leftCols(2 * intrinsic_dim_).transpose() * x;
}

// ---------------------------------------------------------------------------
// TorusEnvironment

double TorusEnvironment::TrigPoly::eval(const ConstVectorRef& z) const {
  double v = constant;
  for (Eigen::Index j = 0; j < z.size(); ++j) v += cos_coef[j] * std::cos(z[j]) + sin_coef[j] * std::sin(z[j]);
  return v;
}

TorusEnvironment::TorusEnvironment(int intrinsic_dim, int ambient_dim, int horizon, int action_count,
                                   std::uint64_t dynamics_seed, const TorusEnvOptions& options)
    : horizon_(horizon),
      action_count_(action_count),
      embedding_(options.identity_rotation ? TorusEmbedding::identity(intrinsic_dim, ambient_dim)
                                           : TorusEmbedding(intrinsic_dim, ambient_dim, options.embedding_seed)),
      options_(options) {
  if (horizon < 1) throw ConfigError("horizon must be positive");
  if (action_count < 2) throw ConfigError("torus environment needs at least two actions");

  const int d = intrinsic_dim;
  Rng rng(dynamics_seed);
  // Random first-order trig polynomial with sum of |coefficients| equal to `scale`.
  auto random_poly = [&](double scale) {
    TrigPoly p;
    p.constant = rng.uniform(-1.0, 1.0);
    p.cos_coef.resize(d);
    p.sin_coef.resize(d);
    for (int j = 0; j < d; ++j) {
      p.cos_coef[j] = rng.uniform(-1.0, 1.0);
      p.sin_coef[j] = rng.uniform(-1.0, 1.0);
    }
    const double total = std::abs(p.constant) + p.cos_coef.cwiseAbs().sum() + p.sin_coef.cwiseAbs().sum();
    const double k = total > 0.0 ? scale / total : 0.0;
    p.constant *= k;
    p.cos_coef *= k;
    p.sin_coef *= k;
    return p;
  };

  init_center_.resize(d);
  for (int i = 0; i < d; ++i) init_center_[i] = rng.uniform(0.0, kTwoPi);

  drift_.resize(horizon);
  reward_.resize(horizon);
  for (int h = 0; h < horizon; ++h) {
    drift_[h].resize(action_count);
    reward_[h].resize(action_count);
    for (int a = 0; a < action_count; ++a) {
      for (int i = 0; i < d; ++i) drift_[h][a].push_back(random_poly(options.drift_scale));
      reward_[h][a] = random_poly(options.reward_amplitude);
    }
  }
}

State TorusEnvironment::make_state(const ConstVectorRef& z) const {
  State s;
  s.latent = z;
  s.obs = embedding_.embed(z);
  return s;
}

State TorusEnvironment::initial_sample(Rng& rng) const {
  Vector z(intrinsic_dim());
  for (int i = 0; i < z.size(); ++i) {
    z[i] = wrap_angle(init_center_[i] + options_.init_spread * truncated_normal(rng, 3.0));
  }
  return make_state(z);
}

Vector TorusEnvironment::latent_drift(int h, const ConstVectorRef& z, int a) const {
  Vector drift(intrinsic_dim());
  if (options_.zero_dynamics) return drift.setZero();
  for (int i = 0; i < drift.size(); ++i) drift[i] = drift_[h - 1][a][i].eval(z);
  return drift;
}

double TorusEnvironment::latent_mean_reward(int h, const ConstVectorRef& z, int a) const {
  if (options_.constant_reward) return options_.constant_reward_value;
  return std::clamp(0.5 * (1.0 + reward_[h - 1][a].eval(z)), 0.0, 1.0);
}

State TorusEnvironment::transition(int h, const State& s, int a, Rng& rng) const {
  Vector z = s.latent + latent_drift(h, s.latent, a);
  for (int i = 0; i < z.size(); ++i) {
    const double noise =
        options_.zero_dynamics ? 0.0 : options_.noise_scale * truncated_normal(rng, options_.noise_truncation);
    z[i] = wrap_angle(z[i] + noise);
  }
  return make_state(z);
}

double TorusEnvironment::mean_reward(int h, const State& s, int a) const {
  return latent_mean_reward(h, s.latent, a);
}

double TorusEnvironment::reward(int h, const State& s, int a, Rng& rng) const {
  const double mean = mean_reward(h, s, a);
  if (options_.constant_reward) return mean;
  // Symmetric noise inside [0, 1], so the mean is preserved.
  const double half_width = options_.reward_noise * std::min(mean, 1.0 - mean);
  if (half_width <= 0.0) return mean;
  return std::clamp(mean + half_width * rng.uniform(-1.0, 1.0), 0.0, 1.0);
}

std::shared_ptr<TorusEnvironment> make_torus_env(int intrinsic_dim, int ambient_dim, int horizon, int action_count,
                                                 std::uint64_t dynamics_seed, const TorusEnvOptions& options) {
  if (ambient_dim < 2 * intrinsic_dim) throw ConfigError("make_torus_env: D < 2d");
  return std::make_shared<TorusEnvironment>(intrinsic_dim, ambient_dim, horizon, action_count, dynamics_seed, options);
}

PolicyPtr make_torus_target_policy(const TorusEnvironment& env, std::uint64_t seed, double sharpness) {
  const int circles = 2 * env.intrinsic_dim();
  const Matrix basis = env.embedding().rotation().leftCols(circles);
  Rng rng(seed);
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  for (int h = 0; h < env.horizon(); ++h) {
    Matrix latent_weights(env.action_count(), circles);
    for (Eigen::Index j = 0; j < latent_weights.cols(); ++j) {
      for (Eigen::Index i = 0; i < latent_weights.rows(); ++i) latent_weights(i, j) = rng.uniform(-1.0, 1.0);
    }
    weights.push_back(sharpness * latent_weights * basis.transpose());
    biases.push_back(Vector::Zero(env.action_count()));
  }
  return std::make_shared<SoftmaxLinearPolicy>(std::move(weights), std::move(biases), "torus-target");
}

// ---------------------------------------------------------------------------
// Datasets

StepDataset generate_step_dataset(const Environment& env, const Policy& behavior, int h, int count, const Rng& rng,
                                  int workers) {
  check_compatible(env, behavior);
  if (h < 1 || h > env.horizon()) throw std::out_of_range("dataset step outside 1..H");
  if (count < 0) throw DomainError("dataset size must be nonnegative");

  StepDataset ds;
  ds.h = h;
  ds.states.resize(env.obs_dim(), count);
  ds.next_states.resize(env.obs_dim(), count);
  ds.actions.resize(count);
  ds.rewards.resize(count);
  const Rng step_stream = rng.split(static_cast<std::uint64_t>(h));
  parallel_for(static_cast<std::size_t>(count), workers, [&](std::size_t k) {
    Rng episode = step_stream.split(static_cast<std::uint64_t>(k));
    State s = env.initial_sample(episode);
    for (int t = 1;; ++t) {
      const int a = behavior.sample_action(t, s.obs, episode);
      const double r = env.reward(t, s, a, episode);
      State next = env.transition(t, s, a, episode);
      if (t == h) {
        const auto col = static_cast<Eigen::Index>(k);
        ds.states.col(col) = s.obs;
        ds.actions[k] = a;
        ds.next_states.col(col) = next.obs;
        ds.rewards[col] = r;
        return;
      }
      s = std::move(next);
    }
  });
  return ds;
}

namespace {

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw ValidationError("truncated dataset stream");
  return value;
}

void put_csv(std::ostream& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.write(buf, res.ptr - buf);
}

double parse_double(const std::string& tok) {
  double v = 0.0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
    throw ValidationError("bad number in dataset csv: '" + tok + "'");
  }
  return v;
}

std::int64_t parse_int(const std::string& tok) {
  std::int64_t v = 0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
    throw ValidationError("bad integer in dataset csv: '" + tok + "'");
  }
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(tok);
  return out;
}

constexpr char kDatasetMagic[8] = {'N', 'F', 'Q', 'E', 'D', 'S', '0', '1'};

}  // namespace

void write_step_dataset(std::ostream& out, const StepDataset& ds, DatasetFormat format) {
  const auto k = static_cast<std::int64_t>(ds.size());
  const auto dim = static_cast<std::int64_t>(ds.obs_dim());
  if (format == DatasetFormat::Binary) {
    out.write(kDatasetMagic, sizeof(kDatasetMagic));
    put<std::int64_t>(out, ds.h);
    put<std::int64_t>(out, k);
    put<std::int64_t>(out, dim);
    for (Eigen::Index i = 0; i < k; ++i) {
      for (Eigen::Index j = 0; j < dim; ++j) put<double>(out, ds.states(j, i));
      put<std::int64_t>(out, ds.actions[i]);
      for (Eigen::Index j = 0; j < dim; ++j) put<double>(out, ds.next_states(j, i));
      put<double>(out, ds.rewards[i]);
    }
    return;
  }
  out << ds.h << ',' << k << ',' << dim << '\n';
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < dim; ++j) {
      put_csv(out, ds.states(j, i));
      out << ',';
    }
    out << ds.actions[i];
    for (Eigen::Index j = 0; j < dim; ++j) {
      out << ',';
      put_csv(out, ds.next_states(j, i));
    }
    out << ',';
    put_csv(out, ds.rewards[i]);
    out << '\n';
  }
}

StepDataset read_step_dataset(std::istream& in, DatasetFormat format) {
  StepDataset ds;
  std::int64_t k = 0;
  std::int64_t dim = 0;
  auto allocate = [&] {
    if (k < 0 || dim < 0) throw ValidationError("negative dataset header field");
    ds.states.resize(dim, k);
    ds.next_states.resize(dim, k);
    ds.actions.resize(k);
    ds.rewards.resize(k);
  };
  if (format == DatasetFormat::Binary) {
    char magic[sizeof(kDatasetMagic)];
    in.read(magic, sizeof(magic));
    if (!in || !std::equal(magic, magic + sizeof(magic), kDatasetMagic)) {
      throw ValidationError("not a step dataset stream");
    }
    ds.h = static_cast<int>(get<std::int64_t>(in));
    k = get<std::int64_t>(in);
    dim = get<std::int64_t>(in);
    allocate();
    for (Eigen::Index i = 0; i < k; ++i) {
      for (Eigen::Index j = 0; j < dim; ++j) ds.states(j, i) = get<double>(in);
      ds.actions[i] = static_cast<int>(get<std::int64_t>(in));
      for (Eigen::Index j = 0; j < dim; ++j) ds.next_states(j, i) = get<double>(in);
      ds.rewards[i] = get<double>(in);
    }
    return ds;
  }
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty dataset csv");
  const auto header = split_csv_line(line);
  if (header.size() != 3) throw ValidationError("dataset csv header must be h,K,D");
  ds.h = static_cast<int>(parse_int(header[0]));
  k = parse_int(header[1]);
  dim = parse_int(header[2]);
  allocate();
  for (Eigen::Index i = 0; i < k; ++i) {
    if (!std::getline(in, line)) throw ValidationError("dataset csv has fewer rows than its header states");
    const auto tok = split_csv_line(line);
    if (static_cast<std::int64_t>(tok.size()) != 2 * dim + 2) throw ValidationError("dataset csv row has wrong width");
    for (Eigen::Index j = 0; j < dim; ++j) ds.states(j, i) = parse_double(tok[j]);
    ds.actions[i] = static_cast<int>(parse_int(tok[dim]));
    for (Eigen::Index j = 0; j < dim; ++j) ds.next_states(j, i) = parse_double(tok[dim + 1 + j]);
    ds.rewards[i] = parse_double(tok[2 * dim + 1]);
  }
  return ds;
}

}  // namespace nfqe
