#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "qkdfl/datasets.hpp"

namespace qkdfl::fl {

/// Indices into a dataset, ascending.
using Shard = std::vector<std::size_t>;

inline constexpr double kUniformSkew = std::numeric_limits<double>::infinity();

/// Splits items into K disjoint, nonempty shards covering every index.
///
/// `group_keys[i]` is the skew attribute of item i (SNR level, dominant
/// class). For finite `skew` each group is divided among clients by
/// proportions drawn from Dirichlet(skew, ..., skew), so small values
/// concentrate groups and sizes on few clients. An infinite `skew` deals
/// items round-robin in group order, giving sizes within one of n/K.
///
/// Throws std::invalid_argument if there are fewer items than clients or
/// skew is not positive.
std::vector<Shard> partition_non_iid(std::span<const std::size_t> group_keys, std::size_t num_clients,
                                     double skew, std::uint64_t seed);

/// Group keys: rank of each sample's SNR among the distinct SNR values.
std::vector<std::size_t> skew_keys(std::span<const tasks::ChannelSample> data);
/// Group keys: most frequent non-noise class of each sample (0 if none).
std::vector<std::size_t> skew_keys(std::span<const tasks::RadarSample> data);

template <class Sample>
std::vector<std::vector<Sample>> materialize(std::span<const Sample> data, const std::vector<Shard>& shards) {
  std::vector<std::vector<Sample>> out;
  out.reserve(shards.size());
  for (const auto& shard : shards) {
    auto& dst = out.emplace_back();
    dst.reserve(shard.size());
    for (auto i : shard) dst.push_back(data[i]);
  }
  return out;
}

}  // namespace qkdfl::fl
