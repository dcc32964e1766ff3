#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "qkdfl/bit_string.hpp"
#include "qkdfl/param_vec.hpp"

namespace qkdfl::masking {

/// Per-round masking parameters shared by every client.
struct MaskingContext {
  BitString round_seed;          // k^(r): QKD key or PRG output
  std::uint64_t round_index = 0;
  std::size_t num_clients = 0;
  double mask_scale = 1e-3;      // gamma
  std::size_t key_bits = 256;    // length of each derived pair key

  /// K >= 2, gamma >= 0 and finite, seed >= 256 bits, key_bits >= 1.
  void validate() const;
};

struct MaskedUpdate {
  std::size_t client_index = 0;
  std::uint64_t round_index = 0;
  ParamVec params;
};

/// Symmetric pair key: the first `key_bits` bits of
/// SHA-256(seed ∥ LE64(r) ∥ LE64(min) ∥ LE64(max) ∥ LE64(c)) for c = 0, 1, ...
/// with `seed` packed MSB-first. Throws InvalidPairError if i == j or either
/// index is out of range.
BitString derive_pair_key(const MaskingContext& ctx, std::size_t i, std::size_t j);

/// Counter-mode expansion of a pair key into mask bits for one tensor.
/// Block t is SHA-256(key_bytes ∥ LE64(tensor_ordinal) ∥ LE64(t)); bits are
/// consumed MSB-first.
class Keystream {
 public:
  Keystream(const BitString& key, std::uint64_t tensor_ordinal);

  bool next_bit();
  /// Adds +scale for a 1 bit and -scale for a 0 bit to each element of `out`.
  void accumulate(std::span<double> out, double scale);

 private:
  void refill();

  std::vector<std::uint8_t> key_bytes_;
  std::uint64_t tensor_ordinal_;
  std::uint64_t counter_ = 0;
  std::array<std::uint8_t, 32> block_{};
  std::size_t bit_pos_ = 256;
};

/// Literal bit-to-mask map: element e is +gamma if bits[e mod |bits|] is 1,
/// -gamma otherwise.
Tensor bits_to_mask(const BitString& bits, const Shape& shape, double gamma);

/// Keyed mask for one tensor: the keystream of (key, tensor_ordinal) fed
/// through the map above. This is the form used for pairwise masking.
Tensor bits_to_mask(const BitString& key, const Shape& shape, std::uint64_t tensor_ordinal,
                    double gamma);

/// theta + sum_{j>i} m_ij - sum_{j<i} m_ji, tensor by tensor in canonical order.
MaskedUpdate apply_pairwise_masks(const ParamVec& params, std::size_t client_index,
                                  const MaskingContext& ctx);

/// Element-wise mean of the masked updates.
///
/// Inputs are summed in client-index order, so the result does not depend on
/// the order of `masked`. Throws AggregationShapeError on structural mismatch
/// and ProtocolError on mixed rounds or duplicate client indices.
ParamVec aggregate(std::span<const MaskedUpdate> masked);

struct LeakageProxies {
  double cosine = 0.0;
  double pearson = 0.0;
};

/// Cosine similarity and Pearson correlation of the flattened deltas.
/// Throws UndefinedProxyError if either vector has zero norm or zero variance.
LeakageProxies leakage_proxies(const ParamVec& true_delta, const ParamVec& masked_delta);

}  // namespace qkdfl::masking
