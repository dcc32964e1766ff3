#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace qkdfl {

/// Seeded deterministic generator with labeled substreams.
///
/// Substreams are derived from (seed, label) only, so drawing from one
/// substream never shifts another. All distributions are implemented here
/// rather than through <random> distributions, whose output is not pinned by
/// the standard; results are therefore identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }

  /// Independent child stream keyed by a label.
  Rng substream(std::string_view label) const;
  /// Independent child stream keyed by a label and an index (round, client...).
  Rng substream(std::string_view label, std::uint64_t index) const;

  std::uint64_t next_u64() { return engine_(); }
  bool bit() { return (engine_() >> 63) != 0; }
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller.
  double normal();
  /// Gamma(shape, 1), Marsaglia-Tsang.
  double gamma(double shape);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

/// SplitMix64 finalizer; used to derive seeds.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Combines a seed with a label into a new seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label,
                          std::uint64_t index = 0) noexcept;

}  // namespace qkdfl
