#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace resumetrace {

// The four TLS session resumption mechanisms. Session IDs and session
// tickets belong to TLS <= 1.2; PSK identities (0-RTT / 1-RTT) to TLS 1.3.
enum class MechanismKind : int {
  SessionId = 0,
  SessionTicket = 1,
  Psk0Rtt = 2,
  Psk1Rtt = 3,
};

inline constexpr std::array<MechanismKind, 4> kAllMechanisms = {
    MechanismKind::SessionId,
    MechanismKind::SessionTicket,
    MechanismKind::Psk0Rtt,
    MechanismKind::Psk1Rtt,
};

// Stable serialized names: "session_id", "session_ticket", "psk_0rtt", "psk_1rtt".
std::string_view to_string(MechanismKind kind);
std::optional<MechanismKind> mechanism_from_string(std::string_view name);

enum class TriState { No, Yes, Optional };
std::string_view to_string(TriState v);

// Static per-mechanism properties of the resumption mechanisms.
struct MechanismAttributes {
  TriState server_stores_state;
  int rtt_delta_vs_full;  // round trips saved relative to a full handshake
  bool identifier_plaintext_in_hello;
  bool identifier_reusable;
  TriState forward_secrecy;
  std::int64_t recommended_lifetime_limit_s;
  // Session tickets have no numeric upper bound, only "exceeds 24h"; the
  // limit above is then a minimum, serialized as ">86400".
  bool limit_is_minimum;
};

const MechanismAttributes& attributes_of(MechanismKind kind);

// One line per mechanism, stable field order; byte-compared against a
// checked-in transcription in tests.
std::string serialize_attributes(MechanismKind kind);
std::string serialize_attribute_table();

// Small per-mechanism value map, indexable by kind.
template <typename T>
struct PerMechanism {
  std::array<T, 4> values{};

  T& operator[](MechanismKind k) { return values[static_cast<int>(k)]; }
  const T& operator[](MechanismKind k) const { return values[static_cast<int>(k)]; }

  static PerMechanism filled(T v) {
    PerMechanism p;
    p.values.fill(v);
    return p;
  }
};

// An opaque resumption token as held by a client. Timestamps are integer
// milliseconds UTC, durations integer seconds.
struct ResumptionIdentifier {
  MechanismKind kind = MechanismKind::SessionTicket;
  std::string token;  // opaque bytes; empty marks non-support
  std::int64_t issued_at_ms = 0;
  std::optional<std::int64_t> lifetime_hint_s;
  std::string origin_host;
  // Expiry fixed at first issuance; never moved by reissuance while the
  // sticky-expiry countermeasure is active.
  std::int64_t initial_expiry_ms = 0;

  bool resumable() const { return !token.empty(); }
};

struct MechanismDisabled : std::runtime_error {
  explicit MechanismDisabled(MechanismKind kind);
};

// Client-side resumption behavior knobs.
struct ClientPolicy {
  PerMechanism<std::int64_t> lifetime_cap_s = PerMechanism<std::int64_t>::filled(86'400);
  PerMechanism<bool> resumption_enabled = PerMechanism<bool>::filled(true);
  bool sticky_expiry = false;           // anchor expiry at first issuance
  bool accept_reissued = true;          // ignore server-reissued identifiers when false
  bool partition_by_first_party = false;

  bool enabled(MechanismKind k) const { return resumption_enabled[k]; }
};

// Server-side issuance and acceptance behavior.
struct ServerPolicy {
  PerMechanism<bool> supports = PerMechanism<bool>::filled(true);
  std::int64_t lifetime_hint_s = 300;
  // true reissues a fresh identifier on every visit: the prolongation attack.
  bool reissue_on_resumption = true;
  std::int64_t accept_window_s = 86'400;  // how long presented identifiers are honored
  int psk_batch_size = 1;                 // PSK identities issued per handshake
};

// Lifetime the client will actually honor for an identifier:
// min(server hint if present, client cap). A hint of 0 s means the server
// effectively disabled resumption and yields 0. Throws MechanismDisabled
// when the policy disables the identifier's mechanism.
std::int64_t effective_lifetime_s(const ResumptionIdentifier& id, const ClientPolicy& policy);

// Named browser configuration presets (data/browser_presets.csv), schema
// `name,id_lifetime_s,ticket_lifetime_s,third_party_blocked`. A lifetime of
// 0 records "resumption not supported".
struct PolicyPreset {
  std::string name;
  std::int64_t id_lifetime_s = 0;
  std::int64_t ticket_lifetime_s = 0;
  bool third_party_blocked = false;
};

std::vector<PolicyPreset> load_presets(std::istream& in);
std::vector<PolicyPreset> load_presets_file(const std::string& path);
std::optional<PolicyPreset> find_preset(const std::vector<PolicyPreset>& presets,
                                        std::string_view name);
ClientPolicy to_client_policy(const PolicyPreset& preset);

}  // namespace resumetrace
