#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qkdfl/errors.hpp"
#include "qkdfl/masking.hpp"
#include "qkdfl/rng.hpp"

using namespace qkdfl;
using namespace qkdfl::masking;

namespace {

BitString random_bits(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  BitString b(n);
  for (std::size_t i = 0; i < n; ++i) b.set(i, rng.bit());
  return b;
}

MaskingContext context(std::size_t k, std::uint64_t r = 0, double gamma = 1e-3) {
  return MaskingContext{random_bits(256, 42), r, k, gamma, 256};
}

ParamVec random_params(std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  ParamVec p;
  for (const auto& [name, shape] : std::vector<std::pair<std::string, Shape>>{
           {"conv1.weight", {4, 1, 3, 3}}, {"conv1.bias", {4}}, {"head.weight", {2, 4, 1, 1}}, {"head.bias", {2}}}) {
    Tensor t(shape);
    for (auto& v : t.values()) v = scale * rng.normal();
    p.add(name, std::move(t));
  }
  return p;
}

std::vector<MaskedUpdate> plain_updates(const std::vector<ParamVec>& ps) {
  std::vector<MaskedUpdate> out;
  for (std::size_t k = 0; k < ps.size(); ++k) out.push_back({k, 0, ps[k]});
  return out;
}

}  // namespace

TEST(PairKey, SymmetricAndDistinct) {
  const auto ctx = context(8);
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t j = 0; j < 8; ++j) {
      if (i == j) continue;
      EXPECT_EQ(derive_pair_key(ctx, i, j), derive_pair_key(ctx, j, i));
    }
  }
  EXPECT_NE(derive_pair_key(ctx, 0, 1), derive_pair_key(ctx, 0, 2));
  EXPECT_EQ(derive_pair_key(ctx, 2, 5).size(), 256u);
}

TEST(PairKey, RoundChangesEveryKey) {
  const auto a = context(6, 3), b = context(6, 4);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = i + 1; j < 6; ++j) {
      const double frac =
          static_cast<double>(hamming_distance(derive_pair_key(a, i, j), derive_pair_key(b, i, j))) / 256.0;
      EXPECT_GE(frac, 0.35);
      EXPECT_LE(frac, 0.65);
    }
  }
}

TEST(PairKey, InvalidPairs) {
  const auto ctx = context(3);
  EXPECT_THROW(derive_pair_key(ctx, 1, 1), InvalidPairError);
  EXPECT_THROW(derive_pair_key(ctx, 0, 3), InvalidPairError);
}

TEST(MaskingContext, Validation) {
  EXPECT_THROW(apply_pairwise_masks(random_params(1), 0, MaskingContext{random_bits(256, 1), 0, 1, 1e-3, 256}),
               std::invalid_argument);
  EXPECT_THROW(apply_pairwise_masks(random_params(1), 0, MaskingContext{random_bits(255, 1), 0, 2, 1e-3, 256}),
               std::invalid_argument);
  EXPECT_THROW(apply_pairwise_masks(random_params(1), 0, MaskingContext{random_bits(256, 1), 0, 2, -1.0, 256}),
               std::invalid_argument);
}

TEST(BitsToMask, ConstantBits) {
  const auto ones = bits_to_mask(BitString(256, true), {3, 5}, 0.25);
  for (double v : ones.values()) EXPECT_EQ(v, 0.25);
  const auto zeros = bits_to_mask(BitString(256, false), {2, 2}, 1e-3);
  EXPECT_EQ(zeros, Tensor({2, 2}, {-1e-3, -1e-3, -1e-3, -1e-3}));
  // Short bit strings are read cyclically.
  EXPECT_EQ(bits_to_mask(BitString::from_text("10"), {5}, 1.0), Tensor({5}, {1, -1, 1, -1, 1}));
}

TEST(BitsToMask, KeyedMaskIsDeterministic) {
  // A constant key is still hashed into the keystream; only the magnitude is fixed.
  const auto m = bits_to_mask(BitString(256, true), {2, 2}, 0, 1e-3);
  ASSERT_EQ(m.shape(), (Shape{2, 2}));
  for (double v : m.values()) EXPECT_EQ(std::abs(v), 1e-3);
  EXPECT_EQ(m, bits_to_mask(BitString(256, true), {2, 2}, 0, 1e-3));
  EXPECT_NE(bits_to_mask(random_bits(256, 3), {64}, 0, 1.0), bits_to_mask(random_bits(256, 3), {64}, 1, 1.0));
}

TEST(BitsToMask, FollowsKeystream) {
  const auto key = random_bits(256, 9);
  const auto m = bits_to_mask(key, {3, 100}, 2, 0.5);
  Keystream ks(key, 2);
  for (double v : m.values()) EXPECT_EQ(v, ks.next_bit() ? 0.5 : -0.5);
}

TEST(ApplyMasks, ZeroParamsClientOneOfThree) {
  const auto ctx = context(3, 0, 1e-3);
  const auto zero = random_params(1).zeros_like();
  const auto masked = apply_pairwise_masks(zero, 1, ctx);
  ASSERT_TRUE(masked.params.same_structure(zero));
  EXPECT_EQ(masked.client_index, 1u);
  const auto k01 = derive_pair_key(ctx, 0, 1), k12 = derive_pair_key(ctx, 1, 2);
  for (std::size_t t = 0; t < zero.num_tensors(); ++t) {
    const auto m01 = bits_to_mask(k01, zero[t].shape(), t, 1e-3);
    const auto m12 = bits_to_mask(k12, zero[t].shape(), t, 1e-3);
    for (std::size_t e = 0; e < zero[t].size(); ++e) {
      const double v = masked.params[t][e];
      EXPECT_DOUBLE_EQ(v, m12[e] - m01[e]);
      EXPECT_TRUE(std::abs(v) < 1e-15 || std::abs(std::abs(v) - 2e-3) < 1e-15) << v;
    }
  }
}

TEST(ApplyMasks, MaskedMinusTrueIsSignedPairSum) {
  const std::size_t K = 5;
  const auto ctx = context(K, 2, 1e-2);
  const auto p = random_params(7);
  for (std::size_t i = 0; i < K; ++i) {
    const auto masked = apply_pairwise_masks(p, i, ctx);
    for (std::size_t t = 0; t < p.num_tensors(); ++t) {
      Tensor expect(p[t].shape());
      for (std::size_t j = 0; j < K; ++j) {
        if (j == i) continue;
        const auto m = bits_to_mask(derive_pair_key(ctx, i, j), p[t].shape(), t, 1e-2);
        for (std::size_t e = 0; e < m.size(); ++e) expect[e] += i < j ? m[e] : -m[e];
      }
      for (std::size_t e = 0; e < p[t].size(); ++e) {
        const double delta = masked.params[t][e] - p[t][e];
        EXPECT_NEAR(delta, expect[e], 1e-12);
        EXPECT_LE(std::abs(delta), (K - 1) * 1e-2 + 1e-12);
      }
    }
  }
}

TEST(Aggregate, TwoScalarClients) {
  ParamVec a, b;
  a.add("w", Tensor({1}, {1.0}));
  b.add("w", Tensor({1}, {3.0}));
  const auto ctx = context(2);
  std::vector<MaskedUpdate> ups = {apply_pairwise_masks(a, 0, ctx), apply_pairwise_masks(b, 1, ctx)};
  EXPECT_NEAR(aggregate(ups)[0][0], 2.0, 1e-12);
}

TEST(Aggregate, ZeroUpdatesCancel) {
  const auto ctx = context(3);
  const auto zero = random_params(2).zeros_like();
  std::vector<MaskedUpdate> ups;
  for (std::size_t k = 0; k < 3; ++k) ups.push_back(apply_pairwise_masks(zero, k, ctx));
  const auto agg = aggregate(ups);
  for (double v : agg.flatten()) EXPECT_LT(std::abs(v), 1e-12);
}

TEST(Aggregate, CancellationForManyK) {
  for (std::size_t K = 2; K <= 8; ++K) {
    const auto ctx = context(K, K);
    std::vector<ParamVec> ps;
    std::vector<MaskedUpdate> masked;
    for (std::size_t k = 0; k < K; ++k) {
      ps.push_back(random_params(100 + k));
      masked.push_back(apply_pairwise_masks(ps[k], k, ctx));
    }
    EXPECT_LE(max_abs_difference(aggregate(masked), aggregate(plain_updates(ps))), 1e-5) << "K=" << K;
  }
}

TEST(Aggregate, PermutationInvariant) {
  const std::size_t K = 5;
  const auto ctx = context(K);
  std::vector<MaskedUpdate> masked;
  for (std::size_t k = 0; k < K; ++k) masked.push_back(apply_pairwise_masks(random_params(k), k, ctx));
  const auto ref = aggregate(masked);
  std::vector<std::size_t> order(K);
  std::iota(order.begin(), order.end(), 0);
  while (std::next_permutation(order.begin(), order.end())) {
    std::vector<MaskedUpdate> shuffled;
    for (auto i : order) shuffled.push_back(masked[i]);
    ASSERT_EQ(aggregate(shuffled), ref);
  }
}

TEST(Aggregate, Errors) {
  const auto p = random_params(1);
  std::vector<MaskedUpdate> one = {{0, 0, p}};
  EXPECT_THROW(aggregate(one), ProtocolError);

  std::vector<MaskedUpdate> mixed = {{0, 0, p}, {1, 1, p}};
  EXPECT_THROW(aggregate(mixed), ProtocolError);

  ParamVec other;
  other.add("w", Tensor({3}));
  std::vector<MaskedUpdate> shapes = {{0, 0, p}, {1, 0, other}};
  EXPECT_THROW(aggregate(shapes), AggregationShapeError);

  std::vector<MaskedUpdate> dup = {{0, 0, p}, {0, 0, p}};
  EXPECT_THROW(aggregate(dup), ProtocolError);
}

TEST(Leakage, IdentityAndNegation) {
  const auto d = random_params(5);
  auto neg = d;
  neg.scale(-1.0);
  const auto same = leakage_proxies(d, d);
  EXPECT_NEAR(same.cosine, 1.0, 1e-12);
  EXPECT_NEAR(same.pearson, 1.0, 1e-12);
  const auto opp = leakage_proxies(d, neg);
  EXPECT_NEAR(opp.cosine, -1.0, 1e-12);
  EXPECT_NEAR(opp.pearson, -1.0, 1e-12);
}

TEST(Leakage, MaskingLowersCosine) {
  const auto d = random_params(6, 1e-4);
  const auto ctx = context(3, 0, 1e-3);
  const auto masked = apply_pairwise_masks(d, 0, ctx);
  const auto p = leakage_proxies(d, masked.params);
  EXPECT_LT(p.cosine, 1.0);
  EXPECT_LE(std::abs(p.cosine), 1.0);
  EXPECT_LE(std::abs(p.pearson), 1.0);

  // Oracle: cosine computed directly from the flattened vectors.
  const auto a = d.flatten(), b = masked.params.flatten();
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  EXPECT_NEAR(p.cosine, ab / std::sqrt(aa * bb), 1e-12);
}

TEST(Leakage, ZeroNormIsUndefined) {
  const auto d = random_params(5);
  EXPECT_THROW(leakage_proxies(d.zeros_like(), d), UndefinedProxyError);
}
