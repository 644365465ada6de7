#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "resumetrace/mechmodel.hpp"

namespace resumetrace::sim {

// Deterministic client/server handshake state machines. No wire bytes, no
// real I/O; linkability is exact token matching, profile ids are sequential
// integers per server, and the clock is whatever timestamps the caller
// passes in.

struct StoredIdentifier {
  ResumptionIdentifier id;
  std::int64_t expiry_ms = 0;  // active expiry; >= id.initial_expiry_ms when reissued non-sticky
};

class ClientCache {
 public:
  explicit ClientCache(ClientPolicy policy) : policy_(std::move(policy)) {}

  const ClientPolicy& policy() const { return policy_; }

  // Best stored identifier for this context at `now`, after evicting
  // expired entries. Preference: psk_0rtt, psk_1rtt, session_ticket,
  // session_id; latest issuance wins within a kind.
  std::optional<StoredIdentifier> candidate(const std::string& host,
                                            const std::string& first_party,
                                            const ServerPolicy& server,
                                            std::int64_t now_ms);

  // Stores a fresh identifier, honoring sticky_expiry / accept_reissued.
  void store(const std::string& host, const std::string& first_party,
             const ResumptionIdentifier& id, std::int64_t now_ms);

  // Removes a single-use identity after it has been presented.
  void consume(const std::string& host, const std::string& first_party,
               const std::string& token);

  std::size_t size() const;

 private:
  struct Key {
    std::string partition;  // first party when partitioning, else empty
    std::string host;
    auto operator<=>(const Key&) const = default;
  };

  Key key_for(const std::string& host, const std::string& first_party) const;
  void evict_expired(std::vector<StoredIdentifier>& entries, std::int64_t now_ms) const;

  ClientPolicy policy_;
  std::map<Key, std::vector<StoredIdentifier>> entries_;
};

enum class LinkEvent { Initial, Resumed, RejectedButLeaked };
std::string_view to_string(LinkEvent e);

struct LinkRecord {
  std::int64_t profile_id;
  std::int64_t ts_ms;
  LinkEvent event;
};

class ServerState {
 public:
  explicit ServerState(ServerPolicy policy, std::string host)
      : policy_(std::move(policy)), host_(std::move(host)) {}

  const ServerPolicy& policy() const { return policy_; }
  const std::string& host() const { return host_; }
  const std::vector<LinkRecord>& link_log() const { return link_log_; }

  struct TokenLookup {
    std::int64_t profile_id;
    bool within_window;
    bool consumed;  // single-use identity already redeemed
  };

  // Every presented token that is still known appends to the link log,
  // resumed or not (identifier leakage). Tokens are forgotten once their
  // age exceeds accept_window.
  std::optional<TokenLookup> present_token(const std::string& token, std::int64_t now_ms);

  std::int64_t new_profile(std::int64_t now_ms);

  // Mints fresh identifiers for `profile_id` (a batch for PSK kinds).
  std::vector<ResumptionIdentifier> issue(MechanismKind kind, std::int64_t profile_id,
                                          std::int64_t now_ms, const ClientPolicy& client);

  void mark_consumed(const std::string& token);

 private:
  struct TokenInfo {
    std::int64_t profile_id;
    std::int64_t issued_at_ms;
    bool consumed = false;
  };

  ServerPolicy policy_;
  std::string host_;
  std::map<std::string, TokenInfo> tokens_;
  std::vector<LinkRecord> link_log_;
  std::int64_t next_profile_id_ = 1;
  std::uint64_t token_seq_ = 0;
};

struct HandshakeOutcome {
  bool resumed = false;
  int rtt_count = 0;
  // Identifiers handed to the client this visit (PSK kinds may batch).
  std::vector<ResumptionIdentifier> issued;
  std::optional<std::string> leaked_token;
  std::int64_t profile_id = 0;
  LinkEvent event = LinkEvent::Initial;
  std::optional<MechanismKind> mechanism;  // negotiated kind, if any
};

// Round trips to application data. TLS 1.2 style (id/ticket): full = 2,
// resumed = 1. TLS 1.3 style (PSK): full = 1, 1-RTT resumption = 1,
// 0-RTT = 0.
int full_handshake_rtt(MechanismKind kind);

std::optional<MechanismKind> negotiate_mechanism(const ClientPolicy& client,
                                                 const ServerPolicy& server);

// One visit of `client` to `host` in the browsing context of `first_party`.
// Timestamps passed to successive calls against one server must not decrease.
HandshakeOutcome visit(ClientCache& client, ServerState& server, const std::string& host,
                       const std::string& first_party, std::int64_t now_ms);

struct VisitEvent {
  std::int64_t ts_ms = 0;
  std::string host;
  std::string first_party;  // defaults to host when empty
};

struct LinkageSegment {
  std::string host;
  std::int64_t profile_id;
  std::int64_t start_ms;
  std::int64_t end_ms;
  int visit_count;
};

struct ScheduleResult {
  std::vector<LinkageSegment> segments;  // sorted by (host, start_ms, profile_id)

  // Longest segment span per host; 0 when the host never appears.
  std::int64_t longest_segment_ms(const std::string& host) const;
  std::int64_t longest_segment_ms() const;
};

// Replays a sorted visit schedule with one ClientCache against one
// ServerState per host. Rejects unsorted input.
ScheduleResult run_schedule(const std::vector<VisitEvent>& visits,
                            const ClientPolicy& client_policy,
                            const ServerPolicy& default_server_policy,
                            const std::map<std::string, ServerPolicy>& per_host_overrides = {});

// Two-site probe: visits A then B, both embedding third party T, and
// reports whether T could link the two visits via a resumed session.
bool third_party_linkable(const ClientPolicy& client_policy);

// CSV `timestamp_ms,host,first_party` (header optional).
std::vector<VisitEvent> load_schedule_csv(std::istream& in);
// CSV `host,profile_id,start_ms,end_ms,visit_count`.
void write_linkage_csv(const ScheduleResult& result, std::ostream& out);

}  // namespace resumetrace::sim
