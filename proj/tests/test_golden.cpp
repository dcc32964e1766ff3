// Byte-layout contracts checked against vectors produced by hashlib
// (tests/golden/make_vectors.py).

#include <gtest/gtest.h>

#include <fstream>

#include <nlohmann/json.hpp>

#include "qkdfl/bb84.hpp"
#include "qkdfl/masking.hpp"
#include "qkdfl/sha256.hpp"

using namespace qkdfl;
using nlohmann::json;

namespace {

json vectors() {
  std::ifstream in(std::string(QKDFL_TEST_DATA_DIR) + "/golden/vectors.json");
  EXPECT_TRUE(in.good());
  return json::parse(in);
}

BitString bits(const json& j) { return BitString::from_text(j.get<std::string>()); }

}  // namespace

TEST(Sha256, KnownDigests) {
  EXPECT_EQ(to_hex(Sha256::digest({})), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  Sha256 h;
  h.update(std::string_view("abc"));
  EXPECT_EQ(to_hex(h.finish()), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  // finish() resets the context.
  h.update(std::string_view("abc"));
  EXPECT_EQ(to_hex(h.finish()), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Golden, PrivacyAmplification) {
  const auto doc = vectors();
  ASSERT_FALSE(doc.at("privacy_amplification").empty());
  for (const auto& c : doc.at("privacy_amplification")) {
    const auto key = qkd::privacy_amplify(bits(c.at("sifted")), c.at("final_len").get<std::size_t>());
    EXPECT_EQ(key.to_text(), c.at("key").get<std::string>());
  }
}

TEST(Golden, PairKdf) {
  const auto doc = vectors();
  for (const auto& c : doc.at("pair_kdf")) {
    const auto i = c.at("i").get<std::size_t>(), j = c.at("j").get<std::size_t>();
    const masking::MaskingContext ctx{bits(c.at("round_seed")), c.at("round").get<std::uint64_t>(),
                                      std::max(i, j) + 1, 1e-3, c.at("key_bits").get<std::size_t>()};
    EXPECT_EQ(masking::derive_pair_key(ctx, i, j).to_text(), c.at("key").get<std::string>());
  }
}

TEST(Golden, Keystream) {
  const auto doc = vectors();
  for (const auto& c : doc.at("keystream")) {
    const auto expect = c.at("bits").get<std::string>();
    masking::Keystream ks(bits(c.at("key")), c.at("ordinal").get<std::uint64_t>());
    std::string got;
    for (std::size_t i = 0; i < expect.size(); ++i) got.push_back(ks.next_bit() ? '1' : '0');
    EXPECT_EQ(got, expect);

    const auto mask = masking::bits_to_mask(bits(c.at("key")), {expect.size()}, c.at("ordinal").get<std::uint64_t>(), 0.5);
    for (std::size_t i = 0; i < expect.size(); ++i) ASSERT_EQ(mask[i], expect[i] == '1' ? 0.5 : -0.5);
  }
}
