#include "resumetrace/tlssim.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <sstream>

#include "resumetrace/util.hpp"

namespace resumetrace::sim {

namespace {

constexpr std::array<MechanismKind, 4> kNegotiationOrder = {
    MechanismKind::Psk0Rtt,
    MechanismKind::Psk1Rtt,
    MechanismKind::SessionTicket,
    MechanismKind::SessionId,
};

bool single_use(MechanismKind kind) {
  return kind == MechanismKind::Psk0Rtt || kind == MechanismKind::Psk1Rtt;
}

// Full-handshake round trips when no mechanism could be negotiated: PSK
// servers are TLS 1.3 style, everything else TLS 1.2 style.
int fallback_full_rtt(const ServerPolicy& server) {
  if (server.supports[MechanismKind::Psk0Rtt] || server.supports[MechanismKind::Psk1Rtt]) {
    return 1;
  }
  return 2;
}

}  // namespace

std::string_view to_string(LinkEvent e) {
  switch (e) {
    case LinkEvent::Initial: return "initial";
    case LinkEvent::Resumed: return "resumed";
    case LinkEvent::RejectedButLeaked: return "rejected_but_leaked";
  }
  return "unknown";
}

int full_handshake_rtt(MechanismKind kind) {
  switch (kind) {
    case MechanismKind::SessionId:
    case MechanismKind::SessionTicket:
      return 2;
    case MechanismKind::Psk0Rtt:
    case MechanismKind::Psk1Rtt:
      return 1;
  }
  return 2;
}

std::optional<MechanismKind> negotiate_mechanism(const ClientPolicy& client,
                                                 const ServerPolicy& server) {
  for (MechanismKind k : kNegotiationOrder) {
    if (client.enabled(k) && server.supports[k]) return k;
  }
  return std::nullopt;
}

// --- ClientCache -----------------------------------------------------------

ClientCache::Key ClientCache::key_for(const std::string& host,
                                      const std::string& first_party) const {
  Key key;
  key.host = host;
  if (policy_.partition_by_first_party) key.partition = first_party;
  return key;
}

void ClientCache::evict_expired(std::vector<StoredIdentifier>& entries,
                                std::int64_t now_ms) const {
  std::erase_if(entries, [&](const StoredIdentifier& e) { return now_ms > e.expiry_ms; });
}

std::optional<StoredIdentifier> ClientCache::candidate(const std::string& host,
                                                       const std::string& first_party,
                                                       const ServerPolicy& server,
                                                       std::int64_t now_ms) {
  auto it = entries_.find(key_for(host, first_party));
  if (it == entries_.end()) return std::nullopt;
  evict_expired(it->second, now_ms);
  const StoredIdentifier* best = nullptr;
  for (MechanismKind k : kNegotiationOrder) {
    if (!policy_.enabled(k) || !server.supports[k]) continue;
    for (const StoredIdentifier& e : it->second) {
      if (e.id.kind != k) continue;
      if (!best || e.id.issued_at_ms > best->id.issued_at_ms) best = &e;
    }
    if (best) break;
  }
  if (!best) return std::nullopt;
  return *best;
}

void ClientCache::store(const std::string& host, const std::string& first_party,
                        const ResumptionIdentifier& id, std::int64_t now_ms) {
  if (!policy_.enabled(id.kind)) return;
  auto& entries = entries_[key_for(host, first_party)];
  evict_expired(entries, now_ms);

  std::int64_t eff_s = effective_lifetime_s(id, policy_);
  std::int64_t fresh_expiry = id.issued_at_ms + eff_s * 1000;

  // An unexpired same-kind entry makes this a reissuance: sticky expiry pins
  // the chain to the first identifier's expiry date.
  const StoredIdentifier* chain = nullptr;
  for (const StoredIdentifier& e : entries) {
    if (e.id.kind == id.kind && (!chain || e.id.issued_at_ms > chain->id.issued_at_ms)) {
      chain = &e;
    }
  }

  StoredIdentifier stored;
  stored.id = id;
  if (chain) {
    if (!policy_.accept_reissued) return;  // keep the original identifier
    stored.id.initial_expiry_ms = chain->id.initial_expiry_ms;
    stored.expiry_ms = policy_.sticky_expiry
                           ? std::min(fresh_expiry, chain->id.initial_expiry_ms)
                           : fresh_expiry;
    if (!single_use(id.kind)) {
      std::erase_if(entries, [&](const StoredIdentifier& e) { return e.id.kind == id.kind; });
    }
  } else {
    stored.id.initial_expiry_ms = fresh_expiry;
    stored.expiry_ms = fresh_expiry;
  }
  entries.push_back(std::move(stored));
}

void ClientCache::consume(const std::string& host, const std::string& first_party,
                          const std::string& token) {
  auto it = entries_.find(key_for(host, first_party));
  if (it == entries_.end()) return;
  std::erase_if(it->second, [&](const StoredIdentifier& e) { return e.id.token == token; });
}

std::size_t ClientCache::size() const {
  std::size_t n = 0;
  for (const auto& [key, entries] : entries_) n += entries.size();
  return n;
}

// --- ServerState -----------------------------------------------------------

std::optional<ServerState::TokenLookup> ServerState::present_token(const std::string& token,
                                                                   std::int64_t now_ms) {
  auto it = tokens_.find(token);
  if (it == tokens_.end()) return std::nullopt;
  std::int64_t age_ms = now_ms - it->second.issued_at_ms;
  if (age_ms > policy_.accept_window_s * 1000) {
    // The server forgets identifiers once their window lapses; a later
    // presentation is indistinguishable from a foreign token.
    tokens_.erase(it);
    return std::nullopt;
  }
  TokenLookup lookup{it->second.profile_id, true, it->second.consumed};
  link_log_.push_back({lookup.profile_id, now_ms,
                       lookup.consumed ? LinkEvent::RejectedButLeaked : LinkEvent::Resumed});
  return lookup;
}

std::int64_t ServerState::new_profile(std::int64_t now_ms) {
  std::int64_t id = next_profile_id_++;
  link_log_.push_back({id, now_ms, LinkEvent::Initial});
  return id;
}

std::vector<ResumptionIdentifier> ServerState::issue(MechanismKind kind,
                                                     std::int64_t profile_id,
                                                     std::int64_t now_ms,
                                                     const ClientPolicy& client) {
  (void)client;
  int count = single_use(kind) ? std::max(1, policy_.psk_batch_size) : 1;
  std::vector<ResumptionIdentifier> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    ResumptionIdentifier id;
    id.kind = kind;
    id.token = host_ + "#" + std::to_string(token_seq_++);
    id.issued_at_ms = now_ms;
    id.lifetime_hint_s = policy_.lifetime_hint_s;
    id.origin_host = host_;
    tokens_[id.token] = TokenInfo{profile_id, now_ms, false};
    out.push_back(std::move(id));
  }
  return out;
}

void ServerState::mark_consumed(const std::string& token) {
  auto it = tokens_.find(token);
  if (it != tokens_.end()) it->second.consumed = true;
}

// --- visit ------------------------------------------------------------------

HandshakeOutcome visit(ClientCache& client, ServerState& server, const std::string& host,
                       const std::string& first_party, std::int64_t now_ms) {
  const std::string& fp = first_party.empty() ? host : first_party;
  HandshakeOutcome outcome;

  auto candidate = client.candidate(host, fp, server.policy(), now_ms);
  std::optional<MechanismKind> issue_kind = negotiate_mechanism(client.policy(), server.policy());
  bool issue_fresh = false;

  if (candidate) {
    MechanismKind kind = candidate->id.kind;
    outcome.mechanism = kind;
    outcome.leaked_token = candidate->id.token;
    auto lookup = server.present_token(candidate->id.token, now_ms);
    if (single_use(kind)) {
      client.consume(host, fp, candidate->id.token);
      server.mark_consumed(candidate->id.token);
    }
    if (lookup && !lookup->consumed) {
      outcome.resumed = true;
      outcome.rtt_count = full_handshake_rtt(kind) + attributes_of(kind).rtt_delta_vs_full;
      outcome.profile_id = lookup->profile_id;
      outcome.event = LinkEvent::Resumed;
      issue_fresh = server.policy().reissue_on_resumption;
      issue_kind = kind;
    } else {
      // Fallback to a full handshake; the transmitted identifier leaked
      // either way, and a known one still links the sessions.
      outcome.resumed = false;
      outcome.rtt_count = full_handshake_rtt(kind);
      if (lookup) {
        outcome.profile_id = lookup->profile_id;
        outcome.event = LinkEvent::RejectedButLeaked;
      } else {
        outcome.profile_id = server.new_profile(now_ms);
        outcome.event = LinkEvent::Initial;
      }
      issue_fresh = true;
    }
  } else {
    outcome.resumed = false;
    outcome.mechanism = issue_kind;
    outcome.rtt_count =
        issue_kind ? full_handshake_rtt(*issue_kind) : fallback_full_rtt(server.policy());
    outcome.profile_id = server.new_profile(now_ms);
    outcome.event = LinkEvent::Initial;
    issue_fresh = true;
  }

  if (issue_fresh && issue_kind && server.policy().supports[*issue_kind] &&
      client.policy().enabled(*issue_kind)) {
    outcome.issued = server.issue(*issue_kind, outcome.profile_id, now_ms, client.policy());
    for (const ResumptionIdentifier& id : outcome.issued) {
      client.store(host, fp, id, now_ms);
    }
  }
  return outcome;
}

// --- run_schedule ------------------------------------------------------------

std::int64_t ScheduleResult::longest_segment_ms(const std::string& host) const {
  std::int64_t best = 0;
  for (const LinkageSegment& s : segments) {
    if (s.host == host) best = std::max(best, s.end_ms - s.start_ms);
  }
  return best;
}

std::int64_t ScheduleResult::longest_segment_ms() const {
  std::int64_t best = 0;
  for (const LinkageSegment& s : segments) best = std::max(best, s.end_ms - s.start_ms);
  return best;
}

ScheduleResult run_schedule(const std::vector<VisitEvent>& visits,
                            const ClientPolicy& client_policy,
                            const ServerPolicy& default_server_policy,
                            const std::map<std::string, ServerPolicy>& per_host_overrides) {
  for (std::size_t i = 1; i < visits.size(); ++i) {
    if (visits[i].ts_ms < visits[i - 1].ts_ms) {
      throw std::invalid_argument("schedule must be sorted by timestamp");
    }
  }

  ClientCache client(client_policy);
  std::map<std::string, ServerState> servers;
  struct Row {
    std::int64_t ts_ms;
    std::int64_t profile_id;
  };
  std::map<std::string, std::vector<Row>> rows;

  for (const VisitEvent& v : visits) {
    auto it = servers.find(v.host);
    if (it == servers.end()) {
      auto ov = per_host_overrides.find(v.host);
      const ServerPolicy& pol =
          ov == per_host_overrides.end() ? default_server_policy : ov->second;
      it = servers.emplace(v.host, ServerState(pol, v.host)).first;
    }
    HandshakeOutcome out = visit(client, it->second, v.host,
                                 v.first_party.empty() ? v.host : v.first_party, v.ts_ms);
    rows[v.host].push_back({v.ts_ms, out.profile_id});
  }

  // Maximal consecutive runs of one profile_id per host.
  ScheduleResult result;
  for (const auto& [host, visits_for_host] : rows) {
    std::size_t i = 0;
    while (i < visits_for_host.size()) {
      std::size_t j = i;
      while (j + 1 < visits_for_host.size() &&
             visits_for_host[j + 1].profile_id == visits_for_host[i].profile_id) {
        ++j;
      }
      result.segments.push_back({host, visits_for_host[i].profile_id,
                                 visits_for_host[i].ts_ms, visits_for_host[j].ts_ms,
                                 static_cast<int>(j - i + 1)});
      i = j + 1;
    }
  }
  return result;
}

bool third_party_linkable(const ClientPolicy& client_policy) {
  ServerPolicy tracker_policy;
  tracker_policy.lifetime_hint_s = 86'400;
  tracker_policy.accept_window_s = 86'400;
  tracker_policy.reissue_on_resumption = true;

  ClientCache client(client_policy);
  ServerState site_a(tracker_policy, "a.example");
  ServerState site_b(tracker_policy, "b.example");
  ServerState tracker(tracker_policy, "t.example");

  visit(client, site_a, "a.example", "a.example", 0);
  HandshakeOutcome first = visit(client, tracker, "t.example", "a.example", 0);
  visit(client, site_b, "b.example", "b.example", 60'000);
  HandshakeOutcome second = visit(client, tracker, "t.example", "b.example", 60'000);

  return second.resumed && second.profile_id == first.profile_id;
}

// --- CSV --------------------------------------------------------------------

std::vector<VisitEvent> load_schedule_csv(std::istream& in) {
  std::vector<VisitEvent> visits;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    std::string_view sv = trim(line);
    if (sv.empty() || sv.front() == '#') continue;
    auto fields = split(sv, ',');
    if (first && fields.size() >= 2 && fields[0] == "timestamp_ms") {
      first = false;
      continue;  // header
    }
    first = false;
    if (fields.size() < 2 || fields.size() > 3) {
      throw std::invalid_argument("schedule line needs 2-3 fields: " + std::string(sv));
    }
    VisitEvent v;
    v.ts_ms = parse_i64(fields[0]);
    v.host = std::string(trim(fields[1]));
    if (fields.size() == 3) v.first_party = std::string(trim(fields[2]));
    visits.push_back(std::move(v));
  }
  return visits;
}

void write_linkage_csv(const ScheduleResult& result, std::ostream& out) {
  out << "host,profile_id,start_ms,end_ms,visit_count\n";
  for (const LinkageSegment& s : result.segments) {
    out << s.host << ',' << s.profile_id << ',' << s.start_ms << ',' << s.end_ms << ','
        << s.visit_count << '\n';
  }
}

}  // namespace resumetrace::sim
