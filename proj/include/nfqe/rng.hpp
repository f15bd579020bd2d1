#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace nfqe {

/**
 * Seedable random stream with deterministic substreams.
 *
 * `split(key)` derives a child stream from this stream's seed and the key only, never from
 * the current engine state, so a substream for (seed, h, k) is the same regardless of how
 * much randomness the parent has already consumed.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }

  Rng split(std::uint64_t key) const;
  Rng split(std::initializer_list<std::uint64_t> keys) const;

  /// Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  double normal();
  /// Uniform index in [0, n).
  std::size_t index(std::size_t n);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// SplitMix64 finalizer; used to mix seeds and keys.
std::uint64_t mix64(std::uint64_t x);

}  // namespace nfqe
