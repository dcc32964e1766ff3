#pragma once

#include <cstddef>
#include <cstdint>

#include "qkdfl/bit_string.hpp"

namespace qkdfl::qkd {

struct Bb84Config {
  std::size_t raw_len = 2000;
  double pa_ratio = 0.8;
  double depolarize_prob = 0.0;
  bool eve_present = false;
  std::uint64_t rng_seed = 0;

  /// Throws std::invalid_argument unless raw_len >= 64, 0 < pa_ratio <= 1
  /// and 0 <= depolarize_prob <= 1.
  void validate() const;
};

/// Outcome of one BB84 run.
struct QkdSession {
  BitString key;
  std::size_t sifted_len = 0;
  std::size_t final_len = 0;
  double qber = 0.0;

  /// Abort decision at threshold `tau`: QBER at or above it discards the key.
  bool aborted(double tau) const noexcept { return qber >= tau; }
};

/// Length after privacy amplification: max(256, floor(pa_ratio * sifted_len)).
std::size_t final_key_length(std::size_t sifted_len, double pa_ratio);

/// Simulates one BB84 exchange:
///
///  1. Alice draws random bits and bases.
///  2. Optional intercept-resend: Eve measures each qubit in a random basis and
///     resends her outcome prepared in her own basis.
///  3. Depolarizing noise: with probability `depolarize_prob` the arriving
///     state's bit (read in its own basis) is replaced by a fresh random bit.
///  4. Bob measures in a random basis; a basis mismatch yields a random bit.
///  5. Positions where Alice's and Bob's bases agree are kept (sifting).
///  6. QBER is computed over every sifted position against Alice's bits.
///  7. Bob's sifted bits are hashed down to the final key.
///
/// Each random quantity is drawn from its own labeled substream of
/// `rng_seed`, so toggling Eve or noise leaves the other draws unchanged.
///
/// Throws DegenerateSessionError if nothing survives sifting.
QkdSession run_bb84(const Bb84Config& cfg);

/// Hash-based extractor. Output bits are the first `final_len` bits of
/// SHA-256(packed ∥ LE64(0)) ∥ SHA-256(packed ∥ LE64(1)) ∥ ..., where
/// `packed` is `sifted` packed MSB-first with zero padding.
BitString privacy_amplify(const BitString& sifted, std::size_t final_len);

/// Fraction of positions selected by `sift_mask` where the two strings differ.
/// Throws std::invalid_argument on length mismatch and
/// DegenerateSessionError if the mask selects nothing.
double qber_of(const BitString& alice_bits, const BitString& bob_bits,
               const BitString& sift_mask);

}  // namespace qkdfl::qkd
