#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace odgl {

/// SplitMix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix64(std::uint64_t x);

/// Deterministically combine a base seed with any number of stream labels.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> labels);

/// Seedable random source with platform-independent distributions.
///
/// The engine is std::mt19937_64 (bit-exact across standard libraries); the
/// distributions are implemented here because the std:: ones are not
/// specified bit-for-bit.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();

  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t uniform_int(std::uint64_t bound);

  /// Standard normal via Box-Muller (one cached spare).
  double normal();

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace odgl
