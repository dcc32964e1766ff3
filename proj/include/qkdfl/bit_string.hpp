#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qkdfl {

/// An owned sequence of bits, one byte of storage per bit.
class BitString {
 public:
  BitString() = default;
  explicit BitString(std::size_t n, bool value = false) : bits_(n, value ? 1 : 0) {}

  /// Parses "0101..." text.
  static BitString from_text(std::string_view text);
  /// Unpacks the first `nbits` bits of `bytes`, MSB-first within each byte.
  static BitString from_bytes(std::span<const std::uint8_t> bytes, std::size_t nbits);

  std::size_t size() const noexcept { return bits_.size(); }
  bool empty() const noexcept { return bits_.empty(); }
  bool operator[](std::size_t i) const noexcept { return bits_[i] != 0; }
  void set(std::size_t i, bool v) noexcept { bits_[i] = v ? 1 : 0; }
  void push_back(bool v) { bits_.push_back(v ? 1 : 0); }
  void reserve(std::size_t n) { bits_.reserve(n); }

  /// Packs MSB-first; a trailing partial byte is zero-padded on the right.
  std::vector<std::uint8_t> to_bytes() const;
  std::string to_text() const;

  friend bool operator==(const BitString&, const BitString&) = default;

 private:
  std::vector<std::uint8_t> bits_;
};

std::size_t hamming_distance(const BitString& a, const BitString& b);

}  // namespace qkdfl
