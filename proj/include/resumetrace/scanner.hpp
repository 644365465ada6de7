#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "resumetrace/clock.hpp"
#include "resumetrace/mechmodel.hpp"

namespace resumetrace::scan {

// Active measurement of HTTPS endpoints over TLS 1.2: resumption support,
// hinted and measured lifetimes, STEK key_name rotation, and shared-state
// grouping. Certificates are not validated; the subject of measurement is
// resumption behavior, not authentication.

struct ScanConfig {
  int max_concurrency = 8;
  std::int64_t per_host_min_interval_s = 10;
  std::int64_t timeout_s = 10;
  // Delays between the initial handshake of a trial and its single
  // resumption attempt. Strictly ascending, all positive.
  std::vector<std::int64_t> revisit_schedule_s;
  int port = 443;
  bool offer_tickets = true;
  std::shared_ptr<Clock> clock;  // defaults to the real clock

  ScanConfig();
  void validate() const;  // throws std::invalid_argument
  Clock& clk() const;
};

struct ScanProbeResult {
  std::string host;
  std::int64_t ts_ms = 0;
  bool tcp_ok = false;
  bool tls_ok = false;
  bool session_id_supported = false;
  bool ticket_supported = false;
  std::string session_id;  // raw bytes
  std::string ticket;      // raw bytes
  std::optional<std::int64_t> ticket_lifetime_hint_s;
  std::optional<std::string> error;  // dns_failure | tcp_timeout | tls_alert | protocol_error

  // Line-delimited record, keys exactly: host, ts_ms, tcp_ok, tls_ok,
  // sid_support, ticket_support, sid_hex, ticket_hex, hint_s, err.
  nlohmann::ordered_json to_json() const;
  static ScanProbeResult from_json(const nlohmann::json& j);
};

// One full handshake's findings. `host` may carry an explicit port as
// "name:port". Errors are recorded in the result, never thrown.
ScanProbeResult probe(const std::string& host, const ScanConfig& config);

// Captured client-side session state from one handshake, replayable
// against any host.
class TlsSession;

struct HandshakeObservation {
  bool tcp_ok = false;
  bool tls_ok = false;
  bool reused = false;
  std::string session_id;
  std::string ticket;
  std::optional<std::int64_t> hint_s;
  std::optional<std::string> error;
  std::shared_ptr<TlsSession> session;
};

// Single handshake, optionally presenting previously captured state. The
// building block under probe / measure_lifetime / shared_state_groups;
// public so integration tests can drive resumption chains directly.
HandshakeObservation handshake(const std::string& host, const ScanConfig& config,
                               const TlsSession* resume_from = nullptr);

// Measured-lifetime bracket. hi_s is empty when every scheduled delay was
// accepted (open upper bracket).
struct LifetimeBracket {
  std::int64_t lo_s = 0;
  std::optional<std::int64_t> hi_s;
  // raw (delay, accepted) outcomes, for reports
  std::vector<std::pair<std::int64_t, bool>> trials;
};

// For each delay: fresh initial handshake, wait, then exactly one
// resumption presenting the identical identifier. lo = largest accepted
// delay, hi = smallest rejected delay above lo. Failed attempts count as
// rejected; a host that never completes an initial handshake yields
// (0, first delay).
LifetimeBracket measure_lifetime(const std::string& host, MechanismKind kind,
                                 const ScanConfig& config);

struct TicketTooShort : std::runtime_error {
  TicketTooShort() : std::runtime_error("session ticket shorter than 16-byte key_name") {}
};

// First 16 bytes of a ticket: the key_name of the RFC 5077 recommended
// layout. Throws TicketTooShort below 16 bytes.
std::string extract_stek_keyname(std::string_view ticket);

struct StekObservation {
  std::string host;
  int day_index = 0;
  std::string key_name;  // 16 bytes
};

struct RotationEstimate {
  std::string host;
  int rotation_days = 1;
  // Rotation 1 cannot be told apart from a non-RFC ticket layout, so it is
  // only a lower bound on the true STEK lifetime.
  bool lower_bound = false;
};

struct RotationSummary {
  std::vector<RotationEstimate> per_host;      // sorted by host
  std::map<int, int> histogram_days;           // rotation period -> host count
};

// Per host: the longest run of consecutive day indices sharing one
// key_name. Hosts whose key changes every observation report 1.
RotationSummary estimate_stek_rotation(std::vector<StekObservation> observations);

struct SharedStateResult {
  std::vector<std::vector<std::string>> groups;  // components of size >= 2, each sorted
  std::vector<std::string> singletons;
  int pair_errors = 0;

  int singleton_count() const { return static_cast<int>(singletons.size()); }
};

// Pairwise resumption probing (O(n^2) connections): edge (A,B) iff state
// captured from one resumes at the other. Result is independent of host
// list order up to group ordering.
SharedStateResult shared_state_groups(const std::vector<std::string>& hosts,
                                      const ScanConfig& config);

// Host list: one host per line, or Alexa-style `rank,host` CSV.
std::vector<std::string> load_host_list(std::istream& in);

// Probes every host through a bounded worker pool and appends one JSON
// record per line. `already_done` hosts are skipped so interrupted scans
// resume idempotently.
void scan_hosts(const std::vector<std::string>& hosts, const ScanConfig& config,
                std::ostream& out, const std::vector<std::string>& already_done = {});

}  // namespace resumetrace::scan
