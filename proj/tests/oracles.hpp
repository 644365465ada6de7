#pragma once

// Test-only oracles and generators, kept independent of the library code
// they cross-check.

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace oracle {

// Longest consecutive tracking period straight from the definition:
// maximize t_j - t_i over index pairs i < j whose intermediate gaps all
// stay within the lifetime. O(n^2).
inline std::int64_t lctp_bruteforce_ms(std::span<const std::int64_t> times_ms,
                                       std::int64_t lifetime_s) {
  const std::int64_t l_ms = lifetime_s * 1000;
  std::int64_t best = 0;
  for (std::size_t i = 0; i < times_ms.size(); ++i) {
    for (std::size_t j = i + 1; j < times_ms.size(); ++j) {
      if (times_ms[j] - times_ms[j - 1] > l_ms) break;  // P fails for all larger j too
      best = std::max(best, times_ms[j] - times_ms[i]);
    }
  }
  return best;
}

// Ascending visit times with gaps in [0, max_gap_ms].
inline std::vector<std::int64_t> random_times(std::mt19937_64& rng, int max_n,
                                              std::int64_t max_gap_ms) {
  std::uniform_int_distribution<int> n_dist(0, max_n);
  std::uniform_int_distribution<std::int64_t> gap_dist(0, max_gap_ms);
  const int n = n_dist(rng);
  std::vector<std::int64_t> times;
  times.reserve(static_cast<std::size_t>(n));
  std::int64_t now = 0;
  for (int i = 0; i < n; ++i) {
    now += gap_dist(rng);
    times.push_back(now);
  }
  return times;
}

// Ascending times with whole-second gaps in [min_gap_s, max_gap_s].
inline std::vector<std::int64_t> random_times_seconds(std::mt19937_64& rng, int n,
                                                      std::int64_t min_gap_s,
                                                      std::int64_t max_gap_s) {
  std::uniform_int_distribution<std::int64_t> gap_dist(min_gap_s, max_gap_s);
  std::vector<std::int64_t> times;
  times.reserve(static_cast<std::size_t>(n));
  std::int64_t now = 0;
  for (int i = 0; i < n; ++i) {
    now += gap_dist(rng) * 1000;
    times.push_back(now);
  }
  return times;
}

}  // namespace oracle
