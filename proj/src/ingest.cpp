#include "resumetrace/ingest.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <random>

#include "resumetrace/util.hpp"

namespace resumetrace::logs {

Pseudonymizer::Pseudonymizer(std::string secret) : secret_(std::move(secret)) {
  if (secret_.empty()) throw std::invalid_argument("pseudonymization key must not be empty");
}

Pseudonymizer Pseudonymizer::from_key_file(const std::string& path) {
  return Pseudonymizer(std::string(trim(read_file(path))));
}

std::string Pseudonymizer::user_pseudonym(std::string_view source_id) const {
  return hex_encode(hmac_sha256(secret_, "user:" + std::string(source_id)).substr(0, 16));
}

std::string Pseudonymizer::host_pseudonym(std::string_view source_id,
                                          std::string_view host) const {
  // Per-user subkey, so identical hosts map to unlinkable pseudonyms across
  // users and background knowledge about one user's history transfers to
  // nobody else.
  std::string subkey = hmac_sha256(secret_, "hostkey:" + std::string(source_id));
  return hex_encode(hmac_sha256(subkey, host).substr(0, 16));
}

namespace {

bool regular_resolution(std::string_view query_type) {
  return query_type == "A" || query_type == "AAAA" || query_type == "a" ||
         query_type == "aaaa";
}

struct CanonicalRow {
  std::string user;
  std::int64_t ts_ms;
  std::string host;
};

}  // namespace

IngestStats ingest_stream(std::istream& raw, const Pseudonymizer& pseudo, std::ostream& out) {
  IngestStats stats;
  std::vector<CanonicalRow> rows;
  std::string line;
  bool first = true;
  while (std::getline(raw, line)) {
    std::string_view sv = trim(line);
    if (sv.empty() || sv.front() == '#') continue;
    auto fields = split(sv, ',');
    if (first && !fields.empty() && (fields[0] == "source_id" || fields[0] == "user_id")) {
      first = false;
      continue;
    }
    first = false;
    try {
      if (fields.size() == 4) {
        std::string_view qtype = trim(fields[3]);
        if (!regular_resolution(qtype)) {
          ++stats.dropped_query_type;
          continue;
        }
        std::string source = std::string(trim(fields[0]));
        std::string host = std::string(trim(fields[2]));
        if (source.empty() || host.empty()) throw std::invalid_argument("empty field");
        rows.push_back({pseudo.user_pseudonym(source), parse_i64(fields[1]),
                        pseudo.host_pseudonym(source, host)});
      } else if (fields.size() == 3) {
        // Already canonical; pass through so ingest is idempotent.
        std::string user = std::string(trim(fields[0]));
        std::string host = std::string(trim(fields[2]));
        if (user.empty() || host.empty()) throw std::invalid_argument("empty field");
        rows.push_back({user, parse_i64(fields[1]), host});
      } else {
        throw std::invalid_argument("wrong field count");
      }
      ++stats.kept;
    } catch (const std::exception&) {
      ++stats.malformed;
    }
  }

  std::stable_sort(rows.begin(), rows.end(), [](const CanonicalRow& a, const CanonicalRow& b) {
    if (a.user != b.user) return a.user < b.user;
    return a.ts_ms < b.ts_ms;
  });

  out << "user_id,timestamp_ms,host\n";
  for (const CanonicalRow& r : rows) {
    out << r.user << ',' << r.ts_ms << ',' << r.host << '\n';
  }
  return stats;
}

// --- synthetic generation ------------------------------------------------------

namespace {

constexpr std::int64_t kDayMs = 86'400'000;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  // splitmix64 over (seed, user, construct)
  std::uint64_t x = seed ^ (a * 0x9e3779b97f4a7c15ULL) ^ (b * 0xbf58476d1ce4e5b9ULL);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

struct ChainPlan {
  std::int64_t first_ms;
  std::int64_t period_ms;
  std::int64_t count;
};

void manifest_for_uniform_gaps(const std::string& user, const std::string& host,
                               std::int64_t first_ms, std::int64_t last_ms,
                               const std::vector<std::int64_t>& gap_kinds_ms,
                               const std::vector<std::int64_t>& gap_counts,
                               std::int64_t total_span_below_ms,
                               const std::vector<std::int64_t>& assert_lifetimes_s,
                               std::int64_t window_start_ms, std::int64_t window_end_ms,
                               std::vector<ManifestEntry>& manifest);

}  // namespace

void SynthResult::write_visits_csv(std::ostream& out) const {
  out << "user_id,timestamp_ms,host\n";
  for (const auto& [user, ts, host] : rows) {
    out << user << ',' << ts << ',' << host << '\n';
  }
}

nlohmann::json SynthResult::manifest_json() const {
  nlohmann::json entries = nlohmann::json::array();
  for (const ManifestEntry& e : manifest) {
    entries.push_back({{"user", e.user},
                       {"host", e.host},
                       {"metric", e.metric},
                       {"l_s", e.l_s},
                       {"expected", e.expected}});
  }
  return {{"window", {{"start_ms", window_start_ms}, {"end_ms", window_end_ms}}},
          {"entries", entries}};
}

SynthResult synthesize(const nlohmann::json& spec, std::uint64_t seed) {
  if (!spec.is_object() || !spec.contains("window") || !spec.contains("users")) {
    throw std::invalid_argument("synth spec needs `window` and `users`");
  }
  SynthResult result;
  result.window_start_ms = spec["window"].at("start_ms").get<std::int64_t>();
  result.window_end_ms = spec["window"].at("end_ms").get<std::int64_t>();
  if (result.window_start_ms >= result.window_end_ms) {
    throw std::invalid_argument("window start must precede end");
  }

  std::uint64_t user_idx = 0;
  for (const auto& user_spec : spec["users"]) {
    std::string user = user_spec.value("name", "u" + std::to_string(user_idx));
    std::uint64_t construct_idx = 0;
    if (!user_spec.contains("constructs")) {
      throw std::invalid_argument("user entry needs `constructs`");
    }
    for (const auto& c : user_spec["constructs"]) {
      std::string type = c.at("type").get<std::string>();
      std::string host = c.value("host", "h" + std::to_string(user_idx) + "_" +
                                             std::to_string(construct_idx));
      std::vector<std::int64_t> asserts;
      if (c.contains("assert_lifetimes_s")) {
        asserts = c["assert_lifetimes_s"].get<std::vector<std::int64_t>>();
      }

      if (type == "fixed_chain") {
        std::int64_t start = result.window_start_ms + c.at("start_offset_ms").get<std::int64_t>();
        std::int64_t period = c.at("period_ms").get<std::int64_t>();
        std::int64_t count = c.at("count").get<std::int64_t>();
        if (period <= 0 || count < 1) throw std::invalid_argument("bad fixed_chain");
        std::int64_t last = start + (count - 1) * period;
        if (start < result.window_start_ms || last > result.window_end_ms) {
          throw std::invalid_argument("fixed_chain leaves the window");
        }
        for (std::int64_t k = 0; k < count; ++k) {
          result.rows.emplace_back(user, start + k * period, host);
        }
        manifest_for_uniform_gaps(user, host, start, last, {period}, {count - 1},
                                  (count - 1) * period, asserts, result.window_start_ms,
                                  result.window_end_ms, result.manifest);
      } else if (type == "sleep_gap") {
        // Daily activity block with an overnight pause: visits every
        // `visit_period_ms` inside [active_start, active_start+active_len]
        // of each day.
        std::int64_t days = c.at("days").get<std::int64_t>();
        std::int64_t active_start = c.at("active_start_ms").get<std::int64_t>();
        std::int64_t active_len = c.at("active_len_ms").get<std::int64_t>();
        std::int64_t period = c.at("visit_period_ms").get<std::int64_t>();
        if (days < 1 || period <= 0 || active_len < period || active_start < 0 ||
            active_start + active_len > kDayMs) {
          throw std::invalid_argument("bad sleep_gap");
        }
        std::int64_t per_day = active_len / period + 1;  // visits per day
        std::int64_t sleep_gap = kDayMs - (per_day - 1) * period;
        if (days > 1 && sleep_gap <= period) {
          throw std::invalid_argument("sleep gap must exceed the visit period");
        }
        std::int64_t first = result.window_start_ms + active_start;
        std::int64_t last = first + (days - 1) * kDayMs + (per_day - 1) * period;
        if (last > result.window_end_ms) throw std::invalid_argument("sleep_gap leaves window");
        for (std::int64_t d = 0; d < days; ++d) {
          for (std::int64_t j = 0; j < per_day; ++j) {
            result.rows.emplace_back(user, first + d * kDayMs + j * period, host);
          }
        }
        std::vector<std::int64_t> gap_kinds{period};
        std::vector<std::int64_t> gap_counts{days * (per_day - 1)};
        if (days > 1) {
          gap_kinds.push_back(sleep_gap);
          gap_counts.push_back(days - 1);
        }
        manifest_for_uniform_gaps(user, host, first, last, gap_kinds, gap_counts,
                                  (per_day - 1) * period, asserts, result.window_start_ms,
                                  result.window_end_ms, result.manifest);
      } else if (type == "poisson") {
        double per_day = c.at("visits_per_day").get<double>();
        if (!(per_day > 0)) throw std::invalid_argument("bad poisson rate");
        std::mt19937_64 rng(mix_seed(seed, user_idx, construct_idx));
        std::exponential_distribution<double> gap(per_day / static_cast<double>(kDayMs));
        double t = static_cast<double>(result.window_start_ms) + gap(rng);
        while (t <= static_cast<double>(result.window_end_ms)) {
          result.rows.emplace_back(user, static_cast<std::int64_t>(t), host);
          t += gap(rng);
        }
      } else {
        throw std::invalid_argument("unknown construct type: " + type);
      }
      ++construct_idx;
    }
    ++user_idx;
  }

  std::sort(result.rows.begin(), result.rows.end());
  return result;
}

namespace {

// Closed-form metric values for sequences whose gap multiset holds at most
// two distinct values (a repeating period and an optional larger sleep
// gap). The manifest is derived from the plant's arithmetic, independent of
// the analyzer.
void manifest_for_uniform_gaps(const std::string& user, const std::string& host,
                               std::int64_t first_ms, std::int64_t last_ms,
                               const std::vector<std::int64_t>& gap_kinds_ms,
                               const std::vector<std::int64_t>& gap_counts,
                               std::int64_t total_span_below_ms,
                               const std::vector<std::int64_t>& assert_lifetimes_s,
                               std::int64_t window_start_ms, std::int64_t window_end_ms,
                               std::vector<ManifestEntry>& manifest) {
  std::int64_t total_gaps = 0;
  for (std::int64_t c : gap_counts) total_gaps += c;
  const std::int64_t small_gap = gap_kinds_ms.empty() ? 0 : gap_kinds_ms.front();
  const std::int64_t big_gap = gap_kinds_ms.size() > 1 ? gap_kinds_ms.back() : small_gap;

  for (std::int64_t l_s : assert_lifetimes_s) {
    const std::int64_t l_ms = l_s * 1000;

    std::int64_t lctp;
    if (total_gaps == 0) {
      lctp = 0;
    } else if (l_ms >= big_gap) {
      lctp = last_ms - first_ms;
    } else if (l_ms >= small_gap) {
      lctp = total_span_below_ms;
    } else {
      lctp = 0;
    }
    manifest.push_back({user, host, "lctp_ms", l_s, lctp});

    bool ok = total_gaps == 0 || l_ms >= big_gap;
    bool pt = ok && (first_ms - window_start_ms) <= l_ms && (window_end_ms - last_ms) <= l_ms;
    manifest.push_back({user, host, "permanently_trackable", l_s, pt});

    if (total_gaps > 0) {
      std::int64_t hits = 0;
      for (std::size_t i = 0; i < gap_kinds_ms.size(); ++i) {
        if (gap_kinds_ms[i] <= l_ms) hits += gap_counts[i];
      }
      double rr = static_cast<double>(hits) / static_cast<double>(total_gaps);
      manifest.push_back({user, host, "resumption_ratio", l_s, rr});
    }
  }
}

}  // namespace

}  // namespace resumetrace::logs
