#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace resumetrace::logs {

// Raw DNS-style log ingestion: filter to regular name-resolution records,
// pseudonymize, and emit the analyzer's canonical `user_id,timestamp_ms,host`
// CSV sorted by (user, timestamp).

struct RawLogRecord {
  std::string source_id;
  std::int64_t ts_ms = 0;
  std::string target_host;
  std::string query_type;
};

// Keyed one-way pseudonyms. Host pseudonyms are derived per user, so two
// users' pseudonyms for the same host do not match.
class Pseudonymizer {
 public:
  explicit Pseudonymizer(std::string secret);
  static Pseudonymizer from_key_file(const std::string& path);

  // 32 lowercase hex chars (16 bytes of keyed hash).
  std::string user_pseudonym(std::string_view source_id) const;
  std::string host_pseudonym(std::string_view source_id, std::string_view host) const;

 private:
  std::string secret_;
};

struct IngestStats {
  std::uint64_t kept = 0;
  std::uint64_t dropped_query_type = 0;
  std::uint64_t malformed = 0;
};

// Accepts raw 4-column input (`source_id,ts_ms,target_host,query_type`) or
// already-canonical 3-column input, which passes through unpseudonymized;
// that keeps ingest idempotent on its own output. Malformed lines are
// counted, never fatal.
IngestStats ingest_stream(std::istream& raw, const Pseudonymizer& pseudo, std::ostream& out);

// --- Synthetic dataset generation -----------------------------------------
//
// Substitutes for the unavailable DNS corpus: plants constructs with known
// closed-form metric values and records them in a manifest the analyzer
// must reproduce exactly.

struct ManifestEntry {
  std::string user;
  std::string host;
  std::string metric;  // "lctp_ms" | "permanently_trackable" | "resumption_ratio"
  std::int64_t l_s = 0;
  nlohmann::json expected;  // int64 / bool / double
};

struct SynthResult {
  // rows sorted by (user, ts, host)
  std::vector<std::tuple<std::string, std::int64_t, std::string>> rows;
  std::vector<ManifestEntry> manifest;
  std::int64_t window_start_ms = 0;
  std::int64_t window_end_ms = 0;

  void write_visits_csv(std::ostream& out) const;
  nlohmann::json manifest_json() const;
};

// Spec format (JSON):
//   {"window": {"start_ms": N, "end_ms": N},
//    "users": [{"name": "u0", "constructs": [
//       {"type": "fixed_chain", "host": "h0", "start_offset_ms": N,
//        "period_ms": N, "count": N, "assert_lifetimes_s": [..]},
//       {"type": "sleep_gap", "host": "h1", "days": N, "active_start_ms": N,
//        "active_len_ms": N, "visit_period_ms": N, "assert_lifetimes_s": [..]},
//       {"type": "poisson", "host": "h2", "visits_per_day": X}]}]}
// Invalid specs are rejected with std::invalid_argument.
SynthResult synthesize(const nlohmann::json& spec, std::uint64_t seed);

}  // namespace resumetrace::logs
