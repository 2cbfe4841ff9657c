#pragma once

#include <cstdint>
#include <random>

namespace cmi {

/// Seeded generator with platform-independent uniform and normal draws
/// (std distributions are implementation-defined, which would make
/// persisted datasets differ across standard libraries).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Integer uniform on [0, n).
  std::uint64_t below(std::uint64_t n);

  /// Standard normal via Box-Muller; no cached second variate.
  double normal();

 private:
  std::mt19937_64 engine_;
};

/// SplitMix64 finalizer; used to derive independent per-item streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace cmi
