#include "resumetrace/mechmodel.hpp"

#include <random>
#include <sstream>

#include "doctest.h"
#include "resumetrace/util.hpp"

using namespace resumetrace;

TEST_CASE("mechanism names are stable") {
  CHECK(to_string(MechanismKind::SessionId) == "session_id");
  CHECK(to_string(MechanismKind::SessionTicket) == "session_ticket");
  CHECK(to_string(MechanismKind::Psk0Rtt) == "psk_0rtt");
  CHECK(to_string(MechanismKind::Psk1Rtt) == "psk_1rtt");
  for (MechanismKind k : kAllMechanisms) {
    CHECK(mechanism_from_string(to_string(k)) == k);
  }
  CHECK(!mechanism_from_string("psk"));
}

TEST_CASE("attribute table rows") {
  const auto& id = attributes_of(MechanismKind::SessionId);
  CHECK(id.server_stores_state == TriState::Yes);
  CHECK(id.identifier_plaintext_in_hello);
  CHECK(id.identifier_reusable);
  CHECK(id.forward_secrecy == TriState::No);
  CHECK(id.recommended_lifetime_limit_s == 86'400);

  const auto& ticket = attributes_of(MechanismKind::SessionTicket);
  CHECK(ticket.identifier_plaintext_in_hello);
  CHECK(ticket.server_stores_state == TriState::No);
  CHECK(ticket.limit_is_minimum);  // no numeric bound, only "exceeds 24h"

  const auto& psk0 = attributes_of(MechanismKind::Psk0Rtt);
  CHECK(psk0.rtt_delta_vs_full == -1);
  CHECK(!psk0.identifier_plaintext_in_hello);

  const auto& psk1 = attributes_of(MechanismKind::Psk1Rtt);
  CHECK(psk1.rtt_delta_vs_full == 0);
  CHECK(psk1.forward_secrecy == TriState::Optional);
  CHECK(psk1.recommended_lifetime_limit_s == 604'800);
}

TEST_CASE("attribute table byte-matches the transcription fixture") {
  std::string fixture = read_file(std::string(TEST_DATA_DIR) + "/mechanism_attributes.txt");
  CHECK(serialize_attribute_table() == fixture);
}

TEST_CASE("effective lifetime reconciles hint and cap") {
  ClientPolicy policy;
  policy.lifetime_cap_s[MechanismKind::SessionTicket] = 86'400;

  ResumptionIdentifier id;
  id.kind = MechanismKind::SessionTicket;
  id.token = "t";

  id.lifetime_hint_s = 172'800;  // 48h hint against a one-day cap
  CHECK(effective_lifetime_s(id, policy) == 86'400);

  id.lifetime_hint_s.reset();
  policy.lifetime_cap_s[MechanismKind::SessionTicket] = 1'800;
  CHECK(effective_lifetime_s(id, policy) == 1'800);

  id.lifetime_hint_s = 300;
  policy.lifetime_cap_s[MechanismKind::SessionTicket] = 86'400;
  CHECK(effective_lifetime_s(id, policy) == 300);

  // zero hint disables resumption without being an error
  id.lifetime_hint_s = 0;
  CHECK(effective_lifetime_s(id, policy) == 0);

  policy.resumption_enabled[MechanismKind::SessionTicket] = false;
  CHECK_THROWS_AS(effective_lifetime_s(id, policy), MechanismDisabled);
}

TEST_CASE("effective lifetime is monotone and bounded") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::int64_t> dur(0, 1'000'000);
  ClientPolicy policy;
  ResumptionIdentifier id;
  id.kind = MechanismKind::SessionId;
  id.token = "t";
  for (int i = 0; i < 500; ++i) {
    std::int64_t hint = dur(rng), cap = dur(rng);
    id.lifetime_hint_s = hint;
    policy.lifetime_cap_s[MechanismKind::SessionId] = cap;
    std::int64_t eff = effective_lifetime_s(id, policy);
    CHECK(eff <= hint);
    CHECK(eff <= cap);
    id.lifetime_hint_s = hint + 1;
    CHECK(effective_lifetime_s(id, policy) >= eff);
    id.lifetime_hint_s = hint;
    policy.lifetime_cap_s[MechanismKind::SessionId] = cap + 1;
    CHECK(effective_lifetime_s(id, policy) >= eff);
  }
}

TEST_CASE("browser presets load and map to policies") {
  auto presets = load_presets_file(std::string(PROJECT_DATA_DIR) + "/browser_presets.csv");
  REQUIRE(presets.size() == 48);

  auto firefox = find_preset(presets, "firefox-59-desktop");
  REQUIRE(firefox);
  CHECK(firefox->id_lifetime_s == 86'400);
  CHECK(firefox->ticket_lifetime_s == 86'400);
  CHECK(!firefox->third_party_blocked);

  auto tor = find_preset(presets, "tor-browser-desktop");
  REQUIRE(tor);
  CHECK(tor->id_lifetime_s == 0);
  CHECK(tor->third_party_blocked);
  ClientPolicy tor_policy = to_client_policy(*tor);
  CHECK(!tor_policy.enabled(MechanismKind::SessionId));
  CHECK(!tor_policy.enabled(MechanismKind::SessionTicket));

  auto edge = find_preset(presets, "microsoft-edge-41-desktop");
  REQUIRE(edge);
  CHECK(edge->third_party_blocked);
  ClientPolicy edge_policy = to_client_policy(*edge);
  CHECK(edge_policy.partition_by_first_party);
  CHECK(edge_policy.enabled(MechanismKind::SessionId));
  CHECK(edge_policy.lifetime_cap_s[MechanismKind::SessionId] == 36'000);

  // iOS rows have no ticket support
  auto safari_ios = find_preset(presets, "safari-11-ios");
  REQUIRE(safari_ios);
  CHECK(safari_ios->ticket_lifetime_s == 0);
  CHECK(!to_client_policy(*safari_ios).enabled(MechanismKind::SessionTicket));
}

TEST_CASE("preset parser rejects malformed lines") {
  std::istringstream bad("name-only,1,2\n");
  CHECK_THROWS_AS(load_presets(bad), std::invalid_argument);
  std::istringstream negative("x,-5,0,false\n");
  CHECK_THROWS_AS(load_presets(negative), std::invalid_argument);
  std::istringstream comments("# comment\n\nbrave,1800,1800,false\n");
  CHECK(load_presets(comments).size() == 1);
}
