#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "resumetrace/mechmodel.hpp"
#include "resumetrace/scanner.hpp"

namespace resumetrace::report {

// Plot-ready CSV outputs mirroring the measurement figures: lifetime CDFs,
// STEK rotation histogram, and a deterministic summary bundle. No image
// rendering.

struct CurvePoint {
  double x;
  double y;
};

struct CurveSeries {
  std::string label;
  std::vector<CurvePoint> points;  // x strictly ascending
  std::string x_unit;
  std::string y_unit;

  void validate() const;      // x ascending
  void validate_cdf() const;  // plus y nondecreasing, final y <= 1
};

struct MeasuredLifetime {
  std::string host;
  MechanismKind kind = MechanismKind::SessionTicket;
  std::int64_t lo_s = 0;
  std::optional<std::int64_t> hi_s;  // empty = open bracket
};

// Hinted CDF over ticket-supporting hosts (zero hints included, plus an
// "erroneous" bucket series for them) and measured CDFs (bracket lo) per
// mechanism. Series labels: ticket_hint, ticket_hint_erroneous,
// session_ticket_measured, session_id_measured.
std::vector<CurveSeries> build_lifetime_cdfs(const std::vector<scan::ScanProbeResult>& probes,
                                             const std::vector<MeasuredLifetime>& measured);

CurveSeries build_stek_histogram(const scan::RotationSummary& rotations);

// Empirical CDF helper shared by the builders: step points at each distinct
// value, normalized by the count.
CurveSeries empirical_cdf(std::string label, std::vector<double> values,
                          std::string x_unit);

void write_series_csv(const CurveSeries& series, std::ostream& out);

// Reads whatever inputs exist under `in_dir` (probes.jsonl, lifetime.csv,
// stek.csv, analyzer curve CSVs), writes a bundle with stable filenames
// into `out_dir`: curve CSVs, summary.txt, provenance.json (tool version +
// input SHA-256 digests). Deterministic given identical inputs; missing
// metrics are noted and their sections omitted.
void summarize(const std::string& in_dir, const std::string& out_dir);

// CSV `host,kind,lo_s,hi_s` ("inf" for an open bracket).
std::vector<MeasuredLifetime> load_lifetime_csv(std::istream& in);
// CSV `host,rotation_days,lower_bound`.
scan::RotationSummary load_rotation_csv(std::istream& in);

}  // namespace resumetrace::report
