#include "qkdfl/bb84.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "qkdfl/errors.hpp"
#include "qkdfl/rng.hpp"
#include "qkdfl/sha256.hpp"

namespace qkdfl::qkd {

void Bb84Config::validate() const {
  if (raw_len < 64) throw std::invalid_argument("raw_len must be >= 64");
  if (!(pa_ratio > 0.0 && pa_ratio <= 1.0)) throw std::invalid_argument("pa_ratio must be in (0, 1]");
  if (!(depolarize_prob >= 0.0 && depolarize_prob <= 1.0)) {
    throw std::invalid_argument("depolarize_prob must be in [0, 1]");
  }
}

std::size_t final_key_length(std::size_t sifted_len, double pa_ratio) {
  const auto compressed =
      static_cast<std::size_t>(std::floor(pa_ratio * static_cast<double>(sifted_len)));
  return std::max<std::size_t>(256, compressed);
}

namespace {

struct Qubit {
  bool bit;
  bool basis;
};

}  // namespace

QkdSession run_bb84(const Bb84Config& cfg) {
  cfg.validate();
  const Rng root(cfg.rng_seed);
  Rng alice_bits = root.substream("alice.bits");
  Rng alice_bases = root.substream("alice.bases");
  Rng eve_bases = root.substream("eve.bases");
  Rng eve_outcomes = root.substream("eve.outcomes");
  Rng noise_events = root.substream("channel.depolarize");
  Rng noise_bits = root.substream("channel.replacement");
  Rng bob_bases = root.substream("bob.bases");
  Rng bob_outcomes = root.substream("bob.outcomes");

  const std::size_t n = cfg.raw_len;
  BitString alice(n);
  BitString bob(n);
  BitString sift_mask(n);
  BitString bob_sifted;
  bob_sifted.reserve(n / 2 + 64);

  for (std::size_t i = 0; i < n; ++i) {
    // Every stream is advanced once per qubit regardless of branch.
    const bool a_bit = alice_bits.bit();
    const bool a_basis = alice_bases.bit();
    const bool e_basis = eve_bases.bit();
    const bool e_random = eve_outcomes.bit();
    const double noise_u = noise_events.uniform();
    const bool noise_bit = noise_bits.bit();
    const bool b_basis = bob_bases.bit();
    const bool b_random = bob_outcomes.bit();

    Qubit q{a_bit, a_basis};
    if (cfg.eve_present) {
      const bool eve_bit = (e_basis == q.basis) ? q.bit : e_random;
      q = {eve_bit, e_basis};
    }
    if (noise_u < cfg.depolarize_prob) q.bit = noise_bit;

    const bool measured = (b_basis == q.basis) ? q.bit : b_random;
    alice.set(i, a_bit);
    bob.set(i, measured);
    if (a_basis == b_basis) {
      sift_mask.set(i, true);
      bob_sifted.push_back(measured);
    }
  }

  if (bob_sifted.empty()) {
    throw DegenerateSessionError("BB84 session produced no sifted bits (raw_len=" +
                                 std::to_string(n) + ")");
  }

  QkdSession session;
  session.sifted_len = bob_sifted.size();
  session.qber = qber_of(alice, bob, sift_mask);
  session.final_len = final_key_length(session.sifted_len, cfg.pa_ratio);
  if (session.final_len > session.sifted_len) {
    spdlog::warn("privacy amplification expands {} sifted bits to {} key bits",
                 session.sifted_len, session.final_len);
  }
  session.key = privacy_amplify(bob_sifted, session.final_len);
  return session;
}

BitString privacy_amplify(const BitString& sifted, std::size_t final_len) {
  if (sifted.empty()) throw std::invalid_argument("privacy_amplify: empty input");
  if (final_len == 0) throw std::invalid_argument("privacy_amplify: final_len must be >= 1");
  const auto packed = sifted.to_bytes();
  const std::size_t nbytes = (final_len + 7) / 8;
  std::vector<std::uint8_t> stream;
  stream.reserve(nbytes + 32);
  Sha256 h;
  for (std::uint64_t counter = 0; stream.size() < nbytes; ++counter) {
    const Digest block = h.update(packed).update_le64(counter).finish();
    stream.insert(stream.end(), block.begin(), block.end());
  }
  return BitString::from_bytes(stream, final_len);
}

double qber_of(const BitString& alice_bits, const BitString& bob_bits,
               const BitString& sift_mask) {
  if (alice_bits.size() != bob_bits.size() || alice_bits.size() != sift_mask.size()) {
    throw std::invalid_argument("qber_of: inputs must have equal length");
  }
  std::size_t sifted = 0;
  std::size_t errors = 0;
  for (std::size_t i = 0; i < alice_bits.size(); ++i) {
    if (!sift_mask[i]) continue;
    ++sifted;
    errors += alice_bits[i] != bob_bits[i];
  }
  if (sifted == 0) throw DegenerateSessionError("qber_of: sift mask selects no positions");
  return static_cast<double>(errors) / static_cast<double>(sifted);
}

}  // namespace qkdfl::qkd
