#include "qkdfl/param_vec.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace qkdfl {

void ParamVec::add(std::string name, Tensor tensor) {
  for (const auto& e : entries_) {
    if (e.name == name) throw std::invalid_argument("duplicate parameter name: " + name);
  }
  entries_.push_back({std::move(name), std::move(tensor)});
}

std::size_t ParamVec::total_len() const noexcept {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.size();
  return n;
}

const Tensor& ParamVec::at(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.tensor;
  }
  throw std::out_of_range("no parameter named " + name);
}

Tensor& ParamVec::at(const std::string& name) {
  return const_cast<Tensor&>(std::as_const(*this).at(name));
}

bool ParamVec::same_structure(const ParamVec& other) const noexcept {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name != other.entries_[i].name ||
        entries_[i].tensor.shape() != other.entries_[i].tensor.shape()) {
      return false;
    }
  }
  return true;
}

bool ParamVec::all_finite() const noexcept {
  for (const auto& e : entries_) {
    for (double v : e.tensor.values()) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

ParamVec ParamVec::zeros_like() const {
  ParamVec out;
  out.entries_.reserve(entries_.size());
  for (const auto& e : entries_) out.entries_.push_back({e.name, Tensor(e.tensor.shape())});
  return out;
}

std::vector<double> ParamVec::flatten() const {
  std::vector<double> out;
  out.reserve(total_len());
  for (const auto& e : entries_) {
    out.insert(out.end(), e.tensor.values().begin(), e.tensor.values().end());
  }
  return out;
}

void ParamVec::axpy(double scale, const ParamVec& other) {
  if (!same_structure(other)) throw std::invalid_argument("axpy: parameter structure mismatch");
  for (std::size_t t = 0; t < entries_.size(); ++t) {
    auto dst = entries_[t].tensor.values();
    auto src = other.entries_[t].tensor.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
  }
}

void ParamVec::scale(double factor) {
  for (auto& e : entries_) {
    for (double& v : e.tensor.values()) v *= factor;
  }
}

ParamVec difference(const ParamVec& a, const ParamVec& b) {
  ParamVec out = a;
  out.axpy(-1.0, b);
  return out;
}

double max_abs_difference(const ParamVec& a, const ParamVec& b) {
  if (!a.same_structure(b)) throw std::invalid_argument("max_abs_difference: structure mismatch");
  double m = 0.0;
  for (std::size_t t = 0; t < a.num_tensors(); ++t) {
    auto x = a[t].values();
    auto y = b[t].values();
    for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  }
  return m;
}

}  // namespace qkdfl
