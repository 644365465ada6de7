#include "resumetrace/ingest.hpp"

#include <sstream>

#include "doctest.h"
#include "resumetrace/analyzer.hpp"

using namespace resumetrace::logs;
using resumetrace::metrics::SampleWindow;
using resumetrace::metrics::VisitLog;

namespace {

std::string run_ingest(const std::string& raw, const Pseudonymizer& pseudo,
                       IngestStats* stats_out = nullptr) {
  std::istringstream in(raw);
  std::ostringstream out;
  IngestStats stats = ingest_stream(in, pseudo, out);
  if (stats_out != nullptr) *stats_out = stats;
  return out.str();
}

}  // namespace

TEST_CASE("only regular name resolution survives ingestion") {
  Pseudonymizer pseudo("secret");
  IngestStats stats;
  std::string out = run_ingest(
      "10.0.0.1,1000,example.org,A\n"
      "10.0.0.1,2000,example.org,MX\n"
      "10.0.0.1,3000,example.org,AAAA\n"
      "10.0.0.1,4000,example.org,TXT\n",
      pseudo, &stats);
  CHECK(stats.kept == 2);
  CHECK(stats.dropped_query_type == 2);
  CHECK(stats.malformed == 0);
  // header + 2 rows
  CHECK(std::count(out.begin(), out.end(), '\n') == 3);
}

TEST_CASE("pseudonyms are deterministic per user and unlinkable across users") {
  Pseudonymizer pseudo("secret");
  std::string host_a1 = pseudo.host_pseudonym("alice", "example.org");
  std::string host_a2 = pseudo.host_pseudonym("alice", "example.org");
  std::string host_b = pseudo.host_pseudonym("bob", "example.org");
  CHECK(host_a1 == host_a2);
  CHECK(host_a1 != host_b);
  CHECK(host_a1.size() == 32);  // 16 bytes, lowercase hex
  CHECK(host_a1.find_first_not_of("0123456789abcdef") == std::string::npos);

  CHECK(pseudo.user_pseudonym("alice") == pseudo.user_pseudonym("alice"));
  CHECK(pseudo.user_pseudonym("alice") != pseudo.user_pseudonym("bob"));

  Pseudonymizer other("different-secret");
  CHECK(other.host_pseudonym("alice", "example.org") != host_a1);
}

TEST_CASE("malformed lines are counted, never fatal") {
  Pseudonymizer pseudo("secret");
  IngestStats stats;
  run_ingest(
      "10.0.0.1,notatime,example.org,A\n"
      "too,few\n"
      "10.0.0.1,1000,example.org,A\n",
      pseudo, &stats);
  CHECK(stats.kept == 1);
  CHECK(stats.malformed == 2);
}

TEST_CASE("output is sorted by user then time; ingest is idempotent on it") {
  Pseudonymizer pseudo("secret");
  std::string first = run_ingest(
      "zed,9000,site-a.example,A\n"
      "alice,5000,site-b.example,A\n"
      "alice,1000,site-b.example,A\n"
      "zed,2000,site-c.example,AAAA\n",
      pseudo);
  // canonical output fed back through ingest reproduces itself
  std::string second = run_ingest(first, pseudo);
  CHECK(first == second);

  std::istringstream parse(first);
  VisitLog log = VisitLog::load_csv(parse);
  CHECK(log.user_count() == 2);
}

TEST_CASE("synthesize plants a chain with exact closed-form metrics") {
  nlohmann::json spec = {
      {"window", {{"start_ms", 0}, {"end_ms", 61LL * 86'400'000}}},
      {"users",
       {{{"name", "u-chain"},
         {"constructs",
          {{{"type", "fixed_chain"},
            {"host", "h-main"},
            {"start_offset_ms", 3'600'000},
            {"period_ms", 43'200'000},
            {"count", 122},
            {"assert_lifetimes_s", {86'400, 3'600}}}}}}}},
  };
  SynthResult result = synthesize(spec, 7);
  CHECK(result.rows.size() == 122);

  // l = 1 d: whole chain is one run, span = 121 * 12 h
  bool checked_lctp = false;
  for (const ManifestEntry& e : result.manifest) {
    if (e.metric == "lctp_ms" && e.l_s == 86'400) {
      CHECK(e.expected.get<std::int64_t>() == 121LL * 43'200'000);
      checked_lctp = true;
    }
    if (e.metric == "lctp_ms" && e.l_s == 3'600) {
      CHECK(e.expected.get<std::int64_t>() == 0);  // 12 h gaps exceed 1 h
    }
    if (e.metric == "resumption_ratio" && e.l_s == 86'400) {
      CHECK(e.expected.get<double>() == 1.0);
    }
  }
  CHECK(checked_lctp);

  // the analyzer reproduces every manifest value exactly
  std::ostringstream csv;
  result.write_visits_csv(csv);
  std::istringstream parse(csv.str());
  VisitLog log = VisitLog::load_csv(parse);
  SampleWindow window{result.window_start_ms, result.window_end_ms};
  for (const ManifestEntry& e : result.manifest) {
    const auto& times = log.visits[e.user][e.host];
    if (e.metric == "lctp_ms") {
      CHECK(resumetrace::metrics::lctp_ms(times, e.l_s) == e.expected.get<std::int64_t>());
    } else if (e.metric == "permanently_trackable") {
      CHECK(resumetrace::metrics::permanently_trackable(times, e.l_s, window) ==
            e.expected.get<bool>());
    } else if (e.metric == "resumption_ratio") {
      CHECK(resumetrace::metrics::resumption_ratio(times, e.l_s) == e.expected.get<double>());
    }
  }
}

TEST_CASE("sleep-gap construct models the overnight pause") {
  nlohmann::json spec = {
      {"window", {{"start_ms", 0}, {"end_ms", 10LL * 86'400'000}}},
      {"users",
       {{{"name", "u-sleeper"},
         {"constructs",
          {{{"type", "sleep_gap"},
            {"host", "h-daily"},
            {"days", 7},
            {"active_start_ms", 28'800'000},   // 08:00
            {"active_len_ms", 57'600'000},     // active until midnight
            {"visit_period_ms", 3'600'000},    // hourly
            {"assert_lifetimes_s", {3'600, 28'800, 86'400}}}}}}}},
  };
  SynthResult result = synthesize(spec, 1);
  // 17 visits per day (08:00..24:00 hourly), 7 days
  CHECK(result.rows.size() == 7 * 17);

  std::ostringstream csv;
  result.write_visits_csv(csv);
  std::istringstream parse(csv.str());
  VisitLog log = VisitLog::load_csv(parse);
  SampleWindow window{result.window_start_ms, result.window_end_ms};
  for (const ManifestEntry& e : result.manifest) {
    const auto& times = log.visits[e.user][e.host];
    CAPTURE(e.metric);
    CAPTURE(e.l_s);
    if (e.metric == "lctp_ms") {
      CHECK(resumetrace::metrics::lctp_ms(times, e.l_s) == e.expected.get<std::int64_t>());
    } else if (e.metric == "permanently_trackable") {
      CHECK(resumetrace::metrics::permanently_trackable(times, e.l_s, window) ==
            e.expected.get<bool>());
    } else if (e.metric == "resumption_ratio") {
      CHECK(resumetrace::metrics::resumption_ratio(times, e.l_s) == e.expected.get<double>());
    }
  }

  // the 8 h lifetime bridges the overnight gap (sleep gap = 8 h exactly)
  const auto& times = log.visits["u-sleeper"]["h-daily"];
  CHECK(resumetrace::metrics::lctp_ms(times, 28'800) ==
        6LL * 86'400'000 + 16LL * 3'600'000);
  CHECK(resumetrace::metrics::lctp_ms(times, 3'600) == 16LL * 3'600'000);
}

TEST_CASE("synthesis is deterministic per seed") {
  nlohmann::json spec = {
      {"window", {{"start_ms", 0}, {"end_ms", 86'400'000}}},
      {"users",
       {{{"constructs",
          {{{"type", "poisson"}, {"visits_per_day", 50.0}},
           {{"type", "fixed_chain"},
            {"start_offset_ms", 0},
            {"period_ms", 3'600'000},
            {"count", 5}}}}}}},
  };
  SynthResult a = synthesize(spec, 42);
  SynthResult b = synthesize(spec, 42);
  SynthResult c = synthesize(spec, 43);
  std::ostringstream csv_a, csv_b, csv_c;
  a.write_visits_csv(csv_a);
  b.write_visits_csv(csv_b);
  c.write_visits_csv(csv_c);
  CHECK(csv_a.str() == csv_b.str());
  CHECK(csv_a.str() != csv_c.str());
  CHECK(a.manifest_json().dump() == b.manifest_json().dump());
}

TEST_CASE("empty and invalid specs") {
  nlohmann::json empty = {{"window", {{"start_ms", 0}, {"end_ms", 1000}}},
                          {"users", nlohmann::json::array()}};
  SynthResult result = synthesize(empty, 1);
  CHECK(result.rows.empty());
  CHECK(result.manifest.empty());

  CHECK_THROWS_AS(synthesize(nlohmann::json::object(), 1), std::invalid_argument);
  nlohmann::json bad_window = {{"window", {{"start_ms", 10}, {"end_ms", 5}}},
                               {"users", nlohmann::json::array()}};
  CHECK_THROWS_AS(synthesize(bad_window, 1), std::invalid_argument);
  nlohmann::json escaping_chain = {
      {"window", {{"start_ms", 0}, {"end_ms", 1000}}},
      {"users",
       {{{"constructs",
          {{{"type", "fixed_chain"},
            {"start_offset_ms", 0},
            {"period_ms", 600},
            {"count", 10}}}}}}}};
  CHECK_THROWS_AS(synthesize(escaping_chain, 1), std::invalid_argument);
}
