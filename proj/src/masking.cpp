#include "qkdfl/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "qkdfl/errors.hpp"
#include "qkdfl/sha256.hpp"

namespace qkdfl::masking {

void MaskingContext::validate() const {
  if (num_clients < 2) throw std::invalid_argument("masking requires at least 2 clients");
  if (!(mask_scale >= 0.0) || !std::isfinite(mask_scale)) {
    throw std::invalid_argument("mask_scale must be finite and non-negative");
  }
  if (round_seed.size() < 256) throw std::invalid_argument("round seed must have >= 256 bits");
  if (key_bits == 0) throw std::invalid_argument("key_bits must be >= 1");
}

BitString derive_pair_key(const MaskingContext& ctx, std::size_t i, std::size_t j) {
  if (i == j) throw InvalidPairError("pair key requested for i == j == " + std::to_string(i));
  if (i >= ctx.num_clients || j >= ctx.num_clients) {
    throw InvalidPairError("client index out of range for K=" + std::to_string(ctx.num_clients));
  }
  const auto lo = static_cast<std::uint64_t>(std::min(i, j));
  const auto hi = static_cast<std::uint64_t>(std::max(i, j));
  const auto seed = ctx.round_seed.to_bytes();
  const std::size_t nbytes = (ctx.key_bits + 7) / 8;

  std::vector<std::uint8_t> material;
  material.reserve(nbytes + 32);
  Sha256 h;
  for (std::uint64_t c = 0; material.size() < nbytes; ++c) {
    const Digest block =
        h.update(seed).update_le64(ctx.round_index).update_le64(lo).update_le64(hi).update_le64(c).finish();
    material.insert(material.end(), block.begin(), block.end());
  }
  return BitString::from_bytes(material, ctx.key_bits);
}

Keystream::Keystream(const BitString& key, std::uint64_t tensor_ordinal)
    : key_bytes_(key.to_bytes()), tensor_ordinal_(tensor_ordinal) {
  if (key.empty()) throw std::invalid_argument("keystream key must be nonempty");
}

void Keystream::refill() {
  Sha256 h;
  block_ = h.update(key_bytes_).update_le64(tensor_ordinal_).update_le64(counter_++).finish();
  bit_pos_ = 0;
}

bool Keystream::next_bit() {
  if (bit_pos_ == 256) refill();
  const bool b = (block_[bit_pos_ / 8] >> (7 - bit_pos_ % 8)) & 1U;
  ++bit_pos_;
  return b;
}

void Keystream::accumulate(std::span<double> out, double scale) {
  for (double& v : out) v += next_bit() ? scale : -scale;
}

Tensor bits_to_mask(const BitString& key, const Shape& shape, std::uint64_t tensor_ordinal,
                    double gamma) {
  if (key.empty()) throw std::invalid_argument("bits_to_mask: empty key");
  if (element_count(shape) == 0) throw std::invalid_argument("mask shape has no elements");
  Tensor mask(shape);
  Keystream ks(key, tensor_ordinal);
  ks.accumulate(mask.values(), gamma);
  return mask;
}

Tensor bits_to_mask(const BitString& bits, const Shape& shape, double gamma) {
  if (bits.empty()) throw std::invalid_argument("bits_to_mask: empty bit string");
  if (element_count(shape) == 0) throw std::invalid_argument("mask shape has no elements");
  Tensor mask(shape);
  for (std::size_t e = 0; e < mask.size(); ++e) mask[e] = bits[e % bits.size()] ? gamma : -gamma;
  return mask;
}

MaskedUpdate apply_pairwise_masks(const ParamVec& params, std::size_t client_index,
                                  const MaskingContext& ctx) {
  ctx.validate();
  if (client_index >= ctx.num_clients) {
    throw std::invalid_argument("client index " + std::to_string(client_index) +
                                " out of range for K=" + std::to_string(ctx.num_clients));
  }
  if (!params.all_finite()) throw std::invalid_argument("parameters must be finite");

  MaskedUpdate out{client_index, ctx.round_index, params};
  for (std::size_t j = 0; j < ctx.num_clients; ++j) {
    if (j == client_index) continue;
    const BitString key = derive_pair_key(ctx, client_index, j);
    const double signed_scale = client_index < j ? ctx.mask_scale : -ctx.mask_scale;
    for (std::size_t t = 0; t < out.params.num_tensors(); ++t) {
      Keystream ks(key, t);
      ks.accumulate(out.params[t].values(), signed_scale);
    }
  }
  return out;
}

ParamVec aggregate(std::span<const MaskedUpdate> masked) {
  if (masked.size() < 2) throw ProtocolError("aggregation needs at least 2 updates");
  const auto& first = masked.front();
  std::vector<const MaskedUpdate*> ordered;
  ordered.reserve(masked.size());
  for (const auto& u : masked) {
    if (u.round_index != first.round_index) {
      throw ProtocolError("updates from rounds " + std::to_string(first.round_index) + " and " +
                          std::to_string(u.round_index) + " cannot be aggregated together");
    }
    if (!u.params.same_structure(first.params)) {
      throw AggregationShapeError("update from client " + std::to_string(u.client_index) +
                                  " does not match the structure of client " +
                                  std::to_string(first.client_index));
    }
    ordered.push_back(&u);
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const auto* a, const auto* b) { return a->client_index < b->client_index; });
  for (std::size_t k = 1; k < ordered.size(); ++k) {
    if (ordered[k]->client_index == ordered[k - 1]->client_index) {
      throw ProtocolError("duplicate update from client " + std::to_string(ordered[k]->client_index));
    }
  }

  ParamVec sum = first.params.zeros_like();
  for (const auto* u : ordered) sum.axpy(1.0, u->params);
  sum.scale(1.0 / static_cast<double>(ordered.size()));
  return sum;
}

LeakageProxies leakage_proxies(const ParamVec& true_delta, const ParamVec& masked_delta) {
  if (!true_delta.same_structure(masked_delta)) {
    throw std::invalid_argument("leakage_proxies: structure mismatch");
  }
  const auto x = true_delta.flatten();
  const auto y = masked_delta.flatten();
  const auto n = static_cast<double>(x.size());

  double xx = 0.0, yy = 0.0, xy = 0.0, sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx += x[i] * x[i];
    yy += y[i] * y[i];
    xy += x[i] * y[i];
    sx += x[i];
    sy += y[i];
  }
  if (xx == 0.0 || yy == 0.0) throw UndefinedProxyError("leakage proxy of a zero-norm delta");

  const double mx = sx / n;
  const double my = sy / n;
  double cxx = 0.0, cyy = 0.0, cxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    cxx += dx * dx;
    cyy += dy * dy;
    cxy += dx * dy;
  }
  if (cxx == 0.0 || cyy == 0.0) throw UndefinedProxyError("Pearson correlation of a constant delta");

  auto clamp1 = [](double v) { return std::clamp(v, -1.0, 1.0); };
  return {clamp1(xy / (std::sqrt(xx) * std::sqrt(yy))), clamp1(cxy / (std::sqrt(cxx) * std::sqrt(cyy)))};
}

}  // namespace qkdfl::masking
