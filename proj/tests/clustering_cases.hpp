#pragma once

#include <functional>
#include <random>
#include <vector>

#include "scriptcl/coref_metrics.hpp"

namespace scriptcl::testing {

// Calls f on every set partition of mentions {0..n-1} (restricted growth strings).
inline void for_each_partition(int n, const std::function<void(const Clustering&)>& f) {
  std::vector<int> block(static_cast<std::size_t>(n), 0);
  const std::function<void(int, int)> rec = [&](int i, int used) {
    if (i == n) {
      Clustering c;
      c.clusters.assign(static_cast<std::size_t>(used), {});
      for (int m = 0; m < n; ++m) c.clusters[static_cast<std::size_t>(block[static_cast<std::size_t>(m)])].push_back(m);
      f(c);
      return;
    }
    for (int b = 0; b <= used; ++b) {
      block[static_cast<std::size_t>(i)] = b;
      rec(i + 1, std::max(used, b + 1));
    }
  };
  rec(0, 0);
}

inline Clustering random_clustering(int n, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::vector<std::vector<int>> buckets(static_cast<std::size_t>(n));
  for (int m = 0; m < n; ++m) buckets[static_cast<std::size_t>(pick(rng))].push_back(m);
  Clustering c;
  for (auto& b : buckets) {
    if (!b.empty()) c.clusters.push_back(std::move(b));
  }
  return c;
}

}  // namespace scriptcl::testing
