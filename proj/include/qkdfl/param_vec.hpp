#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "qkdfl/tensor.hpp"

namespace qkdfl {

struct NamedTensor {
  std::string name;
  Tensor tensor;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

/// A model's parameters: named tensors in canonical (declaration) order.
///
/// Every masking, aggregation and flattening routine walks entries in this
/// order, row-major within each tensor.
class ParamVec {
 public:
  ParamVec() = default;

  /// Appends a tensor. Throws std::invalid_argument on a duplicate name.
  void add(std::string name, Tensor tensor);

  std::size_t num_tensors() const noexcept { return entries_.size(); }
  std::size_t total_len() const noexcept;
  bool empty() const noexcept { return entries_.empty(); }

  const std::vector<NamedTensor>& entries() const noexcept { return entries_; }
  NamedTensor& entry(std::size_t i) { return entries_.at(i); }
  const NamedTensor& entry(std::size_t i) const { return entries_.at(i); }

  Tensor& operator[](std::size_t i) { return entries_.at(i).tensor; }
  const Tensor& operator[](std::size_t i) const { return entries_.at(i).tensor; }
  /// Lookup by name; throws std::out_of_range.
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);

  /// Same names, shapes and order.
  bool same_structure(const ParamVec& other) const noexcept;
  bool all_finite() const noexcept;

  /// Zero-filled copy with the same structure.
  ParamVec zeros_like() const;
  std::vector<double> flatten() const;

  /// this += scale * other; structures must match.
  void axpy(double scale, const ParamVec& other);
  void scale(double factor);

  /// Bytes of the serialized payload (64-bit floats).
  std::size_t byte_size() const noexcept { return total_len() * sizeof(double); }

  friend bool operator==(const ParamVec&, const ParamVec&) = default;

 private:
  std::vector<NamedTensor> entries_;
};

/// a - b, element-wise.
ParamVec difference(const ParamVec& a, const ParamVec& b);
/// max |a_i - b_i| over every scalar.
double max_abs_difference(const ParamVec& a, const ParamVec& b);

}  // namespace qkdfl
