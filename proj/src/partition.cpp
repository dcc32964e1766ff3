#include "qkdfl/partition.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "qkdfl/rng.hpp"

namespace qkdfl::fl {
namespace {

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

// Largest-remainder rounding of proportions * total.
std::vector<std::size_t> apportion(const std::vector<double>& p, std::size_t total) {
  std::vector<std::size_t> counts(p.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double exact = p[k] * static_cast<double>(total);
    counts[k] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[k];
    remainders.push_back({exact - std::floor(exact), k});
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < total; ++r, ++assigned) ++counts[remainders[r % p.size()].second];
  return counts;
}

}  // namespace

std::vector<Shard> partition_non_iid(std::span<const std::size_t> group_keys, std::size_t num_clients,
                                     double skew, std::uint64_t seed) {
  if (num_clients == 0) throw std::invalid_argument("partition: need at least one client");
  if (group_keys.size() < num_clients) {
    throw std::invalid_argument("partition: dataset of " + std::to_string(group_keys.size()) +
                                " items is smaller than K=" + std::to_string(num_clients));
  }
  if (!(skew > 0.0)) throw std::invalid_argument("partition: skew must be positive");

  const Rng root(seed);
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < group_keys.size(); ++i) groups[group_keys[i]].push_back(i);
  for (auto& [key, members] : groups) {
    Rng rng = root.substream("partition.group", key);
    shuffle(members, rng);
  }

  std::vector<Shard> shards(num_clients);
  if (std::isinf(skew)) {
    std::size_t t = 0;
    for (const auto& [key, members] : groups) {
      for (auto i : members) shards[t++ % num_clients].push_back(i);
    }
  } else {
    for (const auto& [key, members] : groups) {
      Rng rng = root.substream("partition.dirichlet", key);
      std::vector<double> p(num_clients);
      double sum = 0.0;
      for (auto& v : p) sum += (v = rng.gamma(skew));
      if (sum <= 0.0) {
        std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(num_clients));
      } else {
        for (auto& v : p) v /= sum;
      }
      const auto counts = apportion(p, members.size());
      std::size_t pos = 0;
      for (std::size_t k = 0; k < num_clients; ++k) {
        for (std::size_t c = 0; c < counts[k]; ++c) shards[k].push_back(members[pos++]);
      }
    }
    // Every client must hold at least one item.
    for (auto& shard : shards) {
      if (!shard.empty()) continue;
      auto largest = std::max_element(shards.begin(), shards.end(),
                                      [](const Shard& a, const Shard& b) { return a.size() < b.size(); });
      shard.push_back(largest->back());
      largest->pop_back();
    }
  }
  for (auto& shard : shards) std::sort(shard.begin(), shard.end());
  return shards;
}

std::vector<std::size_t> skew_keys(std::span<const tasks::ChannelSample> data) {
  std::vector<double> levels;
  for (const auto& s : data) levels.push_back(s.snr_db);
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  std::vector<std::size_t> keys;
  keys.reserve(data.size());
  for (const auto& s : data) {
    keys.push_back(static_cast<std::size_t>(std::lower_bound(levels.begin(), levels.end(), s.snr_db) - levels.begin()));
  }
  return keys;
}

std::vector<std::size_t> skew_keys(std::span<const tasks::RadarSample> data) {
  std::vector<std::size_t> keys;
  keys.reserve(data.size());
  for (const auto& s : data) {
    std::array<std::size_t, tasks::kRadarClasses> counts{};
    for (auto l : s.labels) {
      if (l < counts.size()) ++counts[l];
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < counts.size(); ++c) {
      if (counts[c] > 0 && (best == 0 || counts[c] > counts[best])) best = c;
    }
    keys.push_back(best);
  }
  return keys;
}

}  // namespace qkdfl::fl
