#include "resumetrace/analyzer.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <thread>

#include "resumetrace/util.hpp"

namespace resumetrace::metrics {

void LifetimeGrid::validate() const {
  if (lifetimes_s.empty()) throw std::invalid_argument("empty lifetime grid");
  for (std::size_t i = 0; i < lifetimes_s.size(); ++i) {
    if (lifetimes_s[i] <= 0) throw std::invalid_argument("lifetimes must be positive");
    if (i > 0 && lifetimes_s[i] <= lifetimes_s[i - 1]) {
      throw std::invalid_argument("lifetime grid must be strictly ascending");
    }
  }
}

bool consecutive_ok(std::span<const std::int64_t> times_ms, std::int64_t lifetime_s) {
  const std::int64_t l_ms = lifetime_s * 1000;
  for (std::size_t i = 1; i < times_ms.size(); ++i) {
    if (times_ms[i] - times_ms[i - 1] > l_ms) return false;
  }
  return true;
}

std::int64_t lctp_ms(std::span<const std::int64_t> times_ms, std::int64_t lifetime_s) {
  if (times_ms.size() <= 1) return 0;
  const std::int64_t l_ms = lifetime_s * 1000;
  std::int64_t best = 0;
  std::int64_t run_start = times_ms[0];
  for (std::size_t i = 1; i < times_ms.size(); ++i) {
    if (times_ms[i] - times_ms[i - 1] > l_ms) {
      best = std::max(best, times_ms[i - 1] - run_start);
      run_start = times_ms[i];
    }
  }
  return std::max(best, times_ms.back() - run_start);
}

std::int64_t lctp_max_ms(const std::vector<VisitSequence>& user_sequences,
                         std::int64_t lifetime_s) {
  std::int64_t best = 0;
  for (const VisitSequence& seq : user_sequences) {
    best = std::max(best, lctp_ms(seq.times_ms, lifetime_s));
  }
  return best;
}

bool permanently_trackable(std::span<const std::int64_t> times_ms, std::int64_t lifetime_s,
                           const SampleWindow& window) {
  if (times_ms.empty()) return false;
  const std::int64_t l_ms = lifetime_s * 1000;
  return consecutive_ok(times_ms, lifetime_s) &&
         times_ms.front() - window.start_ms <= l_ms &&
         window.end_ms - times_ms.back() <= l_ms;
}

double resumption_ratio(std::span<const std::int64_t> times_ms, std::int64_t lifetime_s) {
  if (times_ms.size() < 2) {
    throw UndefinedMetric("resumption ratio is undefined for fewer than two visits");
  }
  const std::int64_t l_ms = lifetime_s * 1000;
  std::size_t hits = 0;
  for (std::size_t i = 1; i < times_ms.size(); ++i) {
    if (times_ms[i] - times_ms[i - 1] <= l_ms) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(times_ms.size() - 1);
}

// --- VisitLog ----------------------------------------------------------------

VisitLog VisitLog::load_csv(std::istream& in) {
  VisitLog log;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    std::string_view sv = trim(line);
    if (sv.empty() || sv.front() == '#') continue;
    auto fields = split(sv, ',');
    if (first && fields.size() == 3 && fields[0] == "user_id") {
      first = false;
      continue;
    }
    first = false;
    if (fields.size() != 3) {
      throw std::invalid_argument("visit log line needs 3 fields: " + std::string(sv));
    }
    log.visits[std::string(trim(fields[0]))][std::string(trim(fields[2]))].push_back(
        parse_i64(fields[1]));
  }
  for (auto& [user, hosts] : log.visits) {
    for (auto& [host, times] : hosts) {
      std::sort(times.begin(), times.end());
      times.erase(std::unique(times.begin(), times.end()), times.end());
    }
  }
  return log;
}

VisitLog VisitLog::load_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open visit log: " + path);
  return load_csv(in);
}

std::vector<VisitSequence> VisitLog::sequences_for(const std::string& user) const {
  std::vector<VisitSequence> out;
  auto it = visits.find(user);
  if (it == visits.end()) return out;
  for (const auto& [host, times] : it->second) {
    out.push_back({user, host, times});
  }
  return out;
}

VisitLog VisitLog::clipped(const SampleWindow& window) const {
  VisitLog out;
  for (const auto& [user, hosts] : visits) {
    for (const auto& [host, times] : hosts) {
      std::vector<std::int64_t> kept;
      for (std::int64_t t : times) {
        if (t >= window.start_ms && t <= window.end_ms) kept.push_back(t);
      }
      if (!kept.empty()) out.visits[user][host] = std::move(kept);
    }
  }
  return out;
}

double trackable_share(const VisitLog& log, std::int64_t lifetime_s,
                       const SampleWindow& window) {
  if (log.visits.empty()) return 0.0;
  std::size_t trackable = 0;
  for (const auto& [user, hosts] : log.visits) {
    for (const auto& [host, times] : hosts) {
      if (permanently_trackable(times, lifetime_s, window)) {
        ++trackable;
        break;
      }
    }
  }
  return static_cast<double>(trackable) / static_cast<double>(log.visits.size());
}

std::vector<CdfPoint> revisit_interval_cdf(const VisitLog& log) {
  std::vector<std::int64_t> gaps_ms;
  for (const auto& [user, hosts] : log.visits) {
    for (const auto& [host, times] : hosts) {
      for (std::size_t i = 1; i < times.size(); ++i) {
        gaps_ms.push_back(times[i] - times[i - 1]);
      }
    }
  }
  std::sort(gaps_ms.begin(), gaps_ms.end());
  std::vector<CdfPoint> points;
  const double n = static_cast<double>(gaps_ms.size());
  for (std::size_t i = 0; i < gaps_ms.size();) {
    std::size_t j = i;
    while (j + 1 < gaps_ms.size() && gaps_ms[j + 1] == gaps_ms[i]) ++j;
    points.push_back({static_cast<double>(gaps_ms[i]) / 1000.0,
                      static_cast<double>(j + 1) / n});
    i = j + 1;
  }
  return points;
}

// --- LctpSweep ----------------------------------------------------------------

namespace {

// Union-find over visit indices; each root tracks its run's first and last
// visit index.
struct RunForest {
  std::vector<int> parent;
  std::vector<int> lo, hi;

  explicit RunForest(int n) : parent(n), lo(n), hi(n) {
    std::iota(parent.begin(), parent.end(), 0);
    std::iota(lo.begin(), lo.end(), 0);
    std::iota(hi.begin(), hi.end(), 0);
  }

  int find(int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }

  int merge(int a, int b) {
    a = find(a);
    b = find(b);
    parent[b] = a;
    lo[a] = std::min(lo[a], lo[b]);
    hi[a] = std::max(hi[a], hi[b]);
    return a;
  }
};

}  // namespace

LctpSweep::LctpSweep(std::span<const std::int64_t> times_ms) {
  const int n = static_cast<int>(times_ms.size());
  if (n <= 1) return;

  std::vector<int> order(n - 1);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return times_ms[a + 1] - times_ms[a] < times_ms[b + 1] - times_ms[b];
  });

  RunForest forest(n);
  std::int64_t best = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const std::int64_t gap = times_ms[order[i] + 1] - times_ms[order[i]];
    // Merge every run boundary with this exact gap before recording.
    std::size_t j = i;
    while (j < order.size() && times_ms[order[j] + 1] - times_ms[order[j]] == gap) {
      int root = forest.merge(order[j], order[j] + 1);
      best = std::max(best, times_ms[forest.hi[root]] - times_ms[forest.lo[root]]);
      ++j;
    }
    thresholds_ms_.push_back(gap);
    spans_ms_.push_back(best);
    i = j;
  }
}

std::int64_t LctpSweep::lctp_ms(std::int64_t lifetime_s) const {
  const std::int64_t l_ms = lifetime_s * 1000;
  auto it = std::upper_bound(thresholds_ms_.begin(), thresholds_ms_.end(), l_ms);
  if (it == thresholds_ms_.begin()) return 0;
  return spans_ms_[static_cast<std::size_t>(it - thresholds_ms_.begin()) - 1];
}

// --- grid sweeps ---------------------------------------------------------------

namespace {

// Runs fn(user_index) across a small thread pool; results land in a
// pre-sized vector so reduction order stays deterministic.
template <typename Fn>
void parallel_over_users(std::size_t count, Fn&& fn) {
  unsigned workers = std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(),
                                                     static_cast<unsigned>(count)));
  if (workers <= 1 || count < 16) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
    });
  }
  for (std::thread& t : pool) t.join();
}

}  // namespace

LctpMaxCurves lctp_max_curves(const VisitLog& log, const LifetimeGrid& grid) {
  grid.validate();
  std::vector<const std::map<std::string, std::vector<std::int64_t>>*> users;
  users.reserve(log.visits.size());
  for (const auto& [user, hosts] : log.visits) users.push_back(&hosts);

  // per_user[u][g] = lctp_max in ms
  std::vector<std::vector<std::int64_t>> per_user(users.size());
  parallel_over_users(users.size(), [&](std::size_t u) {
    std::vector<LctpSweep> sweeps;
    sweeps.reserve(users[u]->size());
    for (const auto& [host, times] : *users[u]) sweeps.emplace_back(times);
    std::vector<std::int64_t>& row = per_user[u];
    row.resize(grid.lifetimes_s.size());
    for (std::size_t g = 0; g < grid.lifetimes_s.size(); ++g) {
      std::int64_t best = 0;
      for (const LctpSweep& sweep : sweeps) {
        best = std::max(best, sweep.lctp_ms(grid.lifetimes_s[g]));
      }
      row[g] = best;
    }
  });

  LctpMaxCurves curves;
  curves.mean_s.resize(grid.lifetimes_s.size(), 0.0);
  curves.median_s.resize(grid.lifetimes_s.size(), 0.0);
  if (users.empty()) return curves;
  for (std::size_t g = 0; g < grid.lifetimes_s.size(); ++g) {
    std::vector<std::int64_t> column;
    column.reserve(users.size());
    double sum = 0.0;
    for (const auto& row : per_user) {
      column.push_back(row[g]);
      sum += static_cast<double>(row[g]);
    }
    std::sort(column.begin(), column.end());
    curves.mean_s[g] = sum / static_cast<double>(column.size()) / 1000.0;
    const std::size_t mid = column.size() / 2;
    const double median_ms =
        column.size() % 2 == 1
            ? static_cast<double>(column[mid])
            : (static_cast<double>(column[mid - 1]) + static_cast<double>(column[mid])) / 2.0;
    curves.median_s[g] = median_ms / 1000.0;
  }
  return curves;
}

std::vector<double> trackable_share_curve(const VisitLog& log, const LifetimeGrid& grid,
                                          const SampleWindow& window) {
  grid.validate();
  std::vector<double> out;
  out.reserve(grid.lifetimes_s.size());
  for (std::int64_t l : grid.lifetimes_s) out.push_back(trackable_share(log, l, window));
  return out;
}

std::vector<double> resumption_ratio_curve(const VisitLog& log, const LifetimeGrid& grid) {
  grid.validate();
  // Sorted gaps per sequence answer every grid point by binary search.
  std::vector<std::vector<std::int64_t>> gap_sets;
  for (const auto& [user, hosts] : log.visits) {
    for (const auto& [host, times] : hosts) {
      if (times.size() < 2) continue;
      std::vector<std::int64_t> gaps;
      gaps.reserve(times.size() - 1);
      for (std::size_t i = 1; i < times.size(); ++i) gaps.push_back(times[i] - times[i - 1]);
      std::sort(gaps.begin(), gaps.end());
      gap_sets.push_back(std::move(gaps));
    }
  }
  std::vector<double> out(grid.lifetimes_s.size(), 0.0);
  if (gap_sets.empty()) return out;
  for (std::size_t g = 0; g < grid.lifetimes_s.size(); ++g) {
    const std::int64_t l_ms = grid.lifetimes_s[g] * 1000;
    double sum = 0.0;
    for (const auto& gaps : gap_sets) {
      auto hits = std::upper_bound(gaps.begin(), gaps.end(), l_ms) - gaps.begin();
      sum += static_cast<double>(hits) / static_cast<double>(gaps.size());
    }
    out[g] = sum / static_cast<double>(gap_sets.size());
  }
  return out;
}

void write_curve_csv(const LifetimeGrid& grid, const std::vector<double>& values,
                     std::ostream& out) {
  out << "l_seconds,value\n";
  for (std::size_t i = 0; i < grid.lifetimes_s.size(); ++i) {
    out << grid.lifetimes_s[i] << ',' << values[i] << '\n';
  }
}

void write_cdf_csv(const std::vector<CdfPoint>& points, std::ostream& out) {
  out << "l_seconds,value\n";
  for (const CdfPoint& p : points) out << p.x << ',' << p.y << '\n';
}

}  // namespace resumetrace::metrics
