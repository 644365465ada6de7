#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace resumetrace::metrics {

// Tracking metrics over visit sequences. Inputs are millisecond timestamps;
// lifetimes are seconds. All interval comparisons are inclusive (gap <= l).

struct VisitSequence {
  std::string user;
  std::string host;
  std::vector<std::int64_t> times_ms;  // ascending
};

struct SampleWindow {
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
};

struct LifetimeGrid {
  std::vector<std::int64_t> lifetimes_s;  // strictly ascending, all positive

  void validate() const;  // throws std::invalid_argument
};

struct UndefinedMetric : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Predicate P: no gap between consecutive visits exceeds l. Vacuously true
// for n <= 1.
bool consecutive_ok(std::span<const std::int64_t> times_ms, std::int64_t lifetime_s);

// Longest consecutive tracking period: maximal span (last - first) of a
// contiguous run once the sequence is split at gaps > l. 0 for n <= 1.
std::int64_t lctp_ms(std::span<const std::int64_t> times_ms, std::int64_t lifetime_s);

// Max lctp across one user's per-host sequences.
std::int64_t lctp_max_ms(const std::vector<VisitSequence>& user_sequences,
                         std::int64_t lifetime_s);

// P holds, the sequence is non-empty, and first/last visits are within l of
// the window edges. Callers must pass times inside the window.
bool permanently_trackable(std::span<const std::int64_t> times_ms, std::int64_t lifetime_s,
                           const SampleWindow& window);

// Fraction of consecutive gaps <= l. Throws UndefinedMetric for n < 2.
double resumption_ratio(std::span<const std::int64_t> times_ms, std::int64_t lifetime_s);

// Canonical visit log: user -> host -> ascending visit times. Loading
// collapses duplicate (user, host, timestamp) rows so DNS bursts for one
// page load do not inflate revisit counts.
struct VisitLog {
  std::map<std::string, std::map<std::string, std::vector<std::int64_t>>> visits;

  static VisitLog load_csv(std::istream& in);  // `user_id,timestamp_ms,host`
  static VisitLog load_csv_file(const std::string& path);

  std::size_t user_count() const { return visits.size(); }
  std::vector<VisitSequence> sequences_for(const std::string& user) const;
  // Drops visits outside the window.
  VisitLog clipped(const SampleWindow& window) const;
};

// Fraction of users permanently trackable by at least one host.
double trackable_share(const VisitLog& log, std::int64_t lifetime_s,
                       const SampleWindow& window);

struct CdfPoint {
  double x;  // seconds
  double y;  // cumulative fraction
};

// Empirical CDF of consecutive-visit gaps pooled across users and hosts.
std::vector<CdfPoint> revisit_interval_cdf(const VisitLog& log);

// Answers lctp for any lifetime in O(log n) after an O(n log n) build:
// gaps sorted once, runs merged in ascending gap order, producing a step
// function over gap thresholds.
class LctpSweep {
 public:
  explicit LctpSweep(std::span<const std::int64_t> times_ms);

  std::int64_t lctp_ms(std::int64_t lifetime_s) const;

 private:
  std::vector<std::int64_t> thresholds_ms_;  // ascending distinct gap values
  std::vector<std::int64_t> spans_ms_;       // lctp once all gaps <= threshold merge
};

// Dataset-level curves over a lifetime grid. Sweeps parallelize per user
// and reduce in deterministic (sorted-user) order.
struct LctpMaxCurves {
  std::vector<double> mean_s;    // indexed by grid position
  std::vector<double> median_s;
};

LctpMaxCurves lctp_max_curves(const VisitLog& log, const LifetimeGrid& grid);
std::vector<double> trackable_share_curve(const VisitLog& log, const LifetimeGrid& grid,
                                          const SampleWindow& window);
// Mean resumption ratio across sequences with n >= 2.
std::vector<double> resumption_ratio_curve(const VisitLog& log, const LifetimeGrid& grid);

void write_curve_csv(const LifetimeGrid& grid, const std::vector<double>& values,
                     std::ostream& out);  // `l_seconds,value`
void write_cdf_csv(const std::vector<CdfPoint>& points, std::ostream& out);

}  // namespace resumetrace::metrics
