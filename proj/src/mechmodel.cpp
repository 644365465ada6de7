#include "resumetrace/mechmodel.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <sstream>

#include "resumetrace/util.hpp"

namespace resumetrace {

std::string_view to_string(MechanismKind kind) {
  switch (kind) {
    case MechanismKind::SessionId: return "session_id";
    case MechanismKind::SessionTicket: return "session_ticket";
    case MechanismKind::Psk0Rtt: return "psk_0rtt";
    case MechanismKind::Psk1Rtt: return "psk_1rtt";
  }
  return "unknown";
}

std::optional<MechanismKind> mechanism_from_string(std::string_view name) {
  for (MechanismKind k : kAllMechanisms) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

std::string_view to_string(TriState v) {
  switch (v) {
    case TriState::No: return "no";
    case TriState::Yes: return "yes";
    case TriState::Optional: return "optional";
  }
  return "unknown";
}

namespace {

// Transcription of the mechanism comparison table. Session IDs: server
// keeps state, -1 RTT, plaintext identifier, reusable, no forward secrecy,
// 24h limit. Tickets: stateless server, limit only bounded below (">24h").
// PSK: identifier inside the encrypted channel, single-use identities,
// 7-day limit; 1-RTT resumption costs no round trip vs. the TLS 1.3 full
// handshake and can offer forward secrecy.
constexpr std::int64_t kDay = 86'400;
constexpr std::int64_t kWeek = 604'800;

const std::array<MechanismAttributes, 4> kAttributeTable = {{
    // SessionId
    {TriState::Yes, -1, true, true, TriState::No, kDay, false},
    // SessionTicket
    {TriState::No, -1, true, true, TriState::No, kDay, true},
    // Psk0Rtt
    {TriState::Optional, -1, false, false, TriState::No, kWeek, false},
    // Psk1Rtt
    {TriState::Optional, 0, false, false, TriState::Optional, kWeek, false},
}};

}  // namespace

const MechanismAttributes& attributes_of(MechanismKind kind) {
  return kAttributeTable[static_cast<int>(kind)];
}

std::string serialize_attributes(MechanismKind kind) {
  const MechanismAttributes& a = attributes_of(kind);
  std::ostringstream out;
  out << to_string(kind) << ": server_stores_state=" << to_string(a.server_stores_state)
      << " rtt_delta_vs_full=" << a.rtt_delta_vs_full
      << " identifier_plaintext_in_hello=" << (a.identifier_plaintext_in_hello ? "yes" : "no")
      << " identifier_reusable=" << (a.identifier_reusable ? "yes" : "no")
      << " forward_secrecy=" << to_string(a.forward_secrecy)
      << " recommended_lifetime_limit_s=" << (a.limit_is_minimum ? ">" : "")
      << a.recommended_lifetime_limit_s;
  return out.str();
}

std::string serialize_attribute_table() {
  std::string out;
  for (MechanismKind k : kAllMechanisms) {
    out += serialize_attributes(k);
    out += '\n';
  }
  return out;
}

MechanismDisabled::MechanismDisabled(MechanismKind kind)
    : std::runtime_error("resumption mechanism disabled by client policy: " +
                         std::string(to_string(kind))) {}

std::int64_t effective_lifetime_s(const ResumptionIdentifier& id, const ClientPolicy& policy) {
  if (!policy.enabled(id.kind)) throw MechanismDisabled(id.kind);
  std::int64_t cap = policy.lifetime_cap_s[id.kind];
  if (!id.lifetime_hint_s) return cap;
  // A hint of 0 s effectively disables resumption; not an error.
  return std::min(*id.lifetime_hint_s, cap);
}

namespace {

bool parse_bool_field(std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("invalid boolean field: " + std::string(v));
}

}  // namespace

std::vector<PolicyPreset> load_presets(std::istream& in) {
  std::vector<PolicyPreset> presets;
  std::string line;
  while (std::getline(in, line)) {
    std::string_view sv = trim(line);
    if (sv.empty() || sv.front() == '#') continue;
    auto fields = split(sv, ',');
    if (fields.size() != 4) {
      throw std::invalid_argument("preset line needs 4 fields: " + std::string(sv));
    }
    PolicyPreset p;
    p.name = std::string(trim(fields[0]));
    p.id_lifetime_s = parse_i64(fields[1]);
    p.ticket_lifetime_s = parse_i64(fields[2]);
    p.third_party_blocked = parse_bool_field(trim(fields[3]));
    if (p.id_lifetime_s < 0 || p.ticket_lifetime_s < 0) {
      throw std::invalid_argument("negative lifetime in preset " + p.name);
    }
    presets.push_back(std::move(p));
  }
  return presets;
}

std::vector<PolicyPreset> load_presets_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open preset file: " + path);
  return load_presets(in);
}

std::optional<PolicyPreset> find_preset(const std::vector<PolicyPreset>& presets,
                                        std::string_view name) {
  auto it = std::find_if(presets.begin(), presets.end(),
                         [&](const PolicyPreset& p) { return p.name == name; });
  if (it == presets.end()) return std::nullopt;
  return *it;
}

ClientPolicy to_client_policy(const PolicyPreset& preset) {
  ClientPolicy policy;
  policy.lifetime_cap_s[MechanismKind::SessionId] = preset.id_lifetime_s;
  policy.lifetime_cap_s[MechanismKind::SessionTicket] = preset.ticket_lifetime_s;
  policy.resumption_enabled[MechanismKind::SessionId] = preset.id_lifetime_s > 0;
  policy.resumption_enabled[MechanismKind::SessionTicket] = preset.ticket_lifetime_s > 0;
  // The preset table predates PSK deployment; nothing measured, so off.
  policy.resumption_enabled[MechanismKind::Psk0Rtt] = false;
  policy.resumption_enabled[MechanismKind::Psk1Rtt] = false;
  policy.lifetime_cap_s[MechanismKind::Psk0Rtt] = 0;
  policy.lifetime_cap_s[MechanismKind::Psk1Rtt] = 0;
  policy.partition_by_first_party = preset.third_party_blocked;
  return policy;
}

}  // namespace resumetrace
