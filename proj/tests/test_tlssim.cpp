#include "resumetrace/tlssim.hpp"

#include <random>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "resumetrace/analyzer.hpp"

using namespace resumetrace;
using namespace resumetrace::sim;

namespace {

constexpr std::int64_t kHourMs = 3'600'000;

ClientPolicy ticket_client(std::int64_t cap_s) {
  ClientPolicy policy;
  policy.resumption_enabled = PerMechanism<bool>::filled(false);
  policy.resumption_enabled[MechanismKind::SessionTicket] = true;
  policy.lifetime_cap_s[MechanismKind::SessionTicket] = cap_s;
  return policy;
}

ServerPolicy ticket_server(std::int64_t hint_s, std::int64_t window_s, bool reissue) {
  ServerPolicy policy;
  policy.supports = PerMechanism<bool>::filled(false);
  policy.supports[MechanismKind::SessionTicket] = true;
  policy.lifetime_hint_s = hint_s;
  policy.accept_window_s = window_s;
  policy.reissue_on_resumption = reissue;
  return policy;
}

}  // namespace

TEST_CASE("fresh client performs a full handshake and gets an identifier") {
  ClientCache client(ticket_client(1'800));
  ServerState server(ticket_server(1'800, 1'800, true), "example.org");
  HandshakeOutcome out = visit(client, server, "example.org", "example.org", 0);
  CHECK(!out.resumed);
  CHECK(out.event == LinkEvent::Initial);
  CHECK(out.profile_id == 1);
  REQUIRE(!out.issued.empty());
  CHECK(out.issued[0].origin_host == "example.org");
  CHECK(!out.leaked_token);
  CHECK(out.rtt_count == 2);
}

TEST_CASE("revisit within the lifetime resumes under the same profile") {
  ClientCache client(ticket_client(1'800));
  ServerState server(ticket_server(1'800, 1'800, true), "example.org");
  HandshakeOutcome first = visit(client, server, "example.org", "example.org", 0);
  HandshakeOutcome second = visit(client, server, "example.org", "example.org", 60'000);
  CHECK(second.resumed);
  CHECK(second.profile_id == first.profile_id);
  CHECK(second.rtt_count == 1);
  CHECK(second.leaked_token == first.issued[0].token);
}

TEST_CASE("client-side expiry keeps the token off the wire") {
  ClientCache client(ticket_client(86'400));
  ServerState server(ticket_server(86'400, 1'000'000, true), "example.org");
  HandshakeOutcome first = visit(client, server, "example.org", "example.org", 0);
  // 90000 s later the identifier expired locally; nothing is presented.
  HandshakeOutcome second = visit(client, server, "example.org", "example.org", 90'000'000);
  CHECK(!second.resumed);
  CHECK(second.profile_id != first.profile_id);
  CHECK(!second.leaked_token);
}

TEST_CASE("prolongation keeps one profile across expiries; sticky expiry stops it") {
  std::vector<VisitEvent> visits{
      {0, "example.org", ""},
      {20 * kHourMs, "example.org", ""},
      {40 * kHourMs, "example.org", ""},
  };
  ClientPolicy client = ticket_client(86'400);
  ServerPolicy server = ticket_server(7 * 86'400, 7 * 86'400, true);

  SUBCASE("reissue on, sticky off: one 40 h segment") {
    ScheduleResult result = run_schedule(visits, client, server);
    REQUIRE(result.segments.size() == 1);
    CHECK(result.segments[0].start_ms == 0);
    CHECK(result.segments[0].end_ms == 40 * kHourMs);
    CHECK(result.segments[0].visit_count == 3);
  }

  SUBCASE("sticky expiry anchors at first issuance") {
    client.sticky_expiry = true;
    ScheduleResult result = run_schedule(visits, client, server);
    REQUIRE(result.segments.size() == 2);
    CHECK(result.segments[0].start_ms == 0);
    CHECK(result.segments[0].end_ms == 20 * kHourMs);
    CHECK(result.segments[0].visit_count == 2);
    CHECK(result.segments[1].start_ms == 40 * kHourMs);
    CHECK(result.segments[1].end_ms == 40 * kHourMs);
    CHECK(result.segments[1].visit_count == 1);
  }

  SUBCASE("refusing reissued identifiers caps the chain like sticky expiry") {
    client.accept_reissued = false;
    ScheduleResult result = run_schedule(visits, client, server);
    REQUIRE(result.segments.size() == 2);
    CHECK(result.segments[0].end_ms - result.segments[0].start_ms == 20 * kHourMs);
  }
}

TEST_CASE("single visit yields one zero-length segment") {
  ScheduleResult result =
      run_schedule({{5'000, "example.org", ""}}, ticket_client(60), ticket_server(60, 60, true));
  REQUIRE(result.segments.size() == 1);
  CHECK(result.segments[0].start_ms == result.segments[0].end_ms);
  CHECK(result.segments[0].visit_count == 1);
}

TEST_CASE("unsorted schedules are rejected") {
  std::vector<VisitEvent> visits{{100, "a", ""}, {50, "a", ""}};
  CHECK_THROWS_AS(run_schedule(visits, ticket_client(60), ticket_server(60, 60, true)),
                  std::invalid_argument);
}

TEST_CASE("third-party linkability follows the partitioning policy") {
  ClientPolicy open_policy;
  CHECK(third_party_linkable(open_policy));

  ClientPolicy partitioned;
  partitioned.partition_by_first_party = true;
  CHECK(!third_party_linkable(partitioned));

  ClientPolicy disabled;
  disabled.resumption_enabled = PerMechanism<bool>::filled(false);
  CHECK(!third_party_linkable(disabled));
}

TEST_CASE("partitioned caches never leak identifiers across first parties") {
  ClientPolicy policy;
  policy.partition_by_first_party = true;
  ClientCache client(policy);
  ServerPolicy sp;
  ServerState tracker(sp, "t.example");
  HandshakeOutcome a = visit(client, tracker, "t.example", "site-a.example", 0);
  HandshakeOutcome b = visit(client, tracker, "t.example", "site-b.example", 1'000);
  CHECK(!b.resumed);
  CHECK(b.profile_id != a.profile_id);
  // same first party resumes fine
  HandshakeOutcome a2 = visit(client, tracker, "t.example", "site-a.example", 2'000);
  CHECK(a2.resumed);
  CHECK(a2.profile_id == a.profile_id);
}

TEST_CASE("round trips match the mechanism attribute deltas") {
  for (MechanismKind kind : kAllMechanisms) {
    ClientPolicy client_policy;
    client_policy.resumption_enabled = PerMechanism<bool>::filled(false);
    client_policy.resumption_enabled[kind] = true;
    client_policy.lifetime_cap_s[kind] = 3'600;
    ServerPolicy server_policy;
    server_policy.supports = PerMechanism<bool>::filled(false);
    server_policy.supports[kind] = true;
    server_policy.accept_window_s = 3'600;
    server_policy.lifetime_hint_s = 3'600;
    server_policy.reissue_on_resumption = true;

    ClientCache client(client_policy);
    ServerState server(server_policy, "h");
    HandshakeOutcome full = visit(client, server, "h", "h", 0);
    HandshakeOutcome resumed = visit(client, server, "h", "h", 1'000);
    CAPTURE(to_string(kind));
    CHECK(!full.resumed);
    CHECK(full.rtt_count == full_handshake_rtt(kind));
    CHECK(resumed.resumed);
    CHECK(resumed.rtt_count ==
          full_handshake_rtt(kind) + attributes_of(kind).rtt_delta_vs_full);
  }
}

TEST_CASE("psk identities are single-use; batches extend the chain") {
  ClientPolicy client_policy;
  client_policy.resumption_enabled = PerMechanism<bool>::filled(false);
  client_policy.resumption_enabled[MechanismKind::Psk1Rtt] = true;
  client_policy.lifetime_cap_s[MechanismKind::Psk1Rtt] = 3'600;
  ServerPolicy server_policy;
  server_policy.supports = PerMechanism<bool>::filled(false);
  server_policy.supports[MechanismKind::Psk1Rtt] = true;
  server_policy.accept_window_s = 3'600;
  server_policy.reissue_on_resumption = false;  // issue-once server

  SUBCASE("single identity supports one resumption") {
    server_policy.psk_batch_size = 1;
    ClientCache client(client_policy);
    ServerState server(server_policy, "h");
    HandshakeOutcome v1 = visit(client, server, "h", "h", 0);
    CHECK(v1.issued.size() == 1);
    HandshakeOutcome v2 = visit(client, server, "h", "h", 1'000);
    CHECK(v2.resumed);
    HandshakeOutcome v3 = visit(client, server, "h", "h", 2'000);
    CHECK(!v3.resumed);  // identity consumed, nothing left to present
    CHECK(v3.profile_id != v1.profile_id);
  }

  SUBCASE("a batch of identities supports that many resumptions") {
    server_policy.psk_batch_size = 3;
    ClientCache client(client_policy);
    ServerState server(server_policy, "h");
    HandshakeOutcome v1 = visit(client, server, "h", "h", 0);
    CHECK(v1.issued.size() == 3);
    for (int i = 1; i <= 3; ++i) {
      HandshakeOutcome v = visit(client, server, "h", "h", i * 1'000);
      CAPTURE(i);
      CHECK(v.resumed);
      CHECK(v.profile_id == v1.profile_id);
    }
    CHECK(!visit(client, server, "h", "h", 5'000).resumed);
  }
}

TEST_CASE("every presented token appends exactly one link-log entry") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 30; ++trial) {
    auto times = oracle::random_times(rng, 30, 5'000'000);
    ClientCache client(ticket_client(1'800));
    ServerState server(ticket_server(1'800, 900, true), "h");
    std::size_t presented = 0;
    std::size_t known_presentations = 0;
    for (std::int64_t t : times) {
      HandshakeOutcome out = visit(client, server, "h", "h", t);
      if (out.leaked_token) ++presented;
      if (out.event != LinkEvent::Initial) ++known_presentations;
    }
    std::size_t non_initial = 0;
    for (const LinkRecord& r : server.link_log()) {
      if (r.event != LinkEvent::Initial) ++non_initial;
    }
    CHECK(server.link_log().size() == times.size());
    CHECK(non_initial == known_presentations);
    CHECK(known_presentations <= presented);
  }
}

TEST_CASE("prolongation equivalence and expiry bound on random schedules") {
  std::mt19937_64 rng(31337);
  for (int trial = 0; trial < 40; ++trial) {
    std::int64_t l_s = std::uniform_int_distribution<std::int64_t>(10, 2'000)(rng);
    auto times = oracle::random_times(rng, 30, 3 * l_s * 1000);
    std::vector<VisitEvent> visits;
    for (std::int64_t t : times) visits.push_back({t, "h", ""});

    ClientPolicy client = ticket_client(l_s);
    ServerPolicy prolonging = ticket_server(1'000'000'000, 1'000'000'000, true);
    ScheduleResult attack = run_schedule(visits, client, prolonging);
    CHECK(attack.longest_segment_ms("h") == metrics::lctp_ms(times, l_s));

    ServerPolicy issue_once = ticket_server(1'000'000'000, l_s, false);
    ScheduleResult bounded = run_schedule(visits, client, issue_once);
    for (const LinkageSegment& seg : bounded.segments) {
      CHECK(seg.end_ms - seg.start_ms <= l_s * 1000);
    }
  }
}

TEST_CASE("schedule csv round trip") {
  std::istringstream in(
      "timestamp_ms,host,first_party\n"
      "0,a.example,a.example\n"
      "600000,t.example,a.example\n"
      "1200000,a.example\n");
  auto visits = load_schedule_csv(in);
  REQUIRE(visits.size() == 3);
  CHECK(visits[1].first_party == "a.example");
  CHECK(visits[2].first_party.empty());

  ScheduleResult result =
      run_schedule(visits, ticket_client(3'600), ticket_server(3'600, 3'600, true));
  std::ostringstream out;
  write_linkage_csv(result, out);
  CHECK(out.str().starts_with("host,profile_id,start_ms,end_ms,visit_count\n"));
  // a.example visited twice within the lifetime: one two-visit segment
  CHECK(out.str().find("a.example,1,0,1200000,2") != std::string::npos);
}

TEST_CASE("mechanism negotiation prefers psk, then tickets, then ids") {
  ClientPolicy client;  // everything enabled
  ServerPolicy server;  // everything supported
  CHECK(negotiate_mechanism(client, server) == MechanismKind::Psk0Rtt);
  server.supports[MechanismKind::Psk0Rtt] = false;
  CHECK(negotiate_mechanism(client, server) == MechanismKind::Psk1Rtt);
  server.supports[MechanismKind::Psk1Rtt] = false;
  CHECK(negotiate_mechanism(client, server) == MechanismKind::SessionTicket);
  client.resumption_enabled[MechanismKind::SessionTicket] = false;
  CHECK(negotiate_mechanism(client, server) == MechanismKind::SessionId);
  client.resumption_enabled[MechanismKind::SessionId] = false;
  CHECK(!negotiate_mechanism(client, server));
}
