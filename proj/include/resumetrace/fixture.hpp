#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "resumetrace/clock.hpp"

namespace resumetrace::fixture {

// Loopback TLS 1.2 test server with scriptable resumption behavior. Real
// handshakes through OpenSSL, not mocked bytes, so the scanner is exercised
// end to end. Integration/test use only.

struct FixtureConfig {
  bool enable_session_ids = true;
  bool enable_tickets = true;
  // Hint sent with tickets; OpenSSL derives it from the session timeout, so
  // it must be >= 1. Also bounds server-side validity under a real clock.
  std::int64_t ticket_hint_s = 300;
  // How long presented identifiers are honored, measured on `clock`.
  std::int64_t accept_window_s = 300;
  // Issue under a fresh STEK every k ticket issuances; 0 keeps one key.
  int stek_rotate_every_k = 0;
  // Fixtures sharing a group id share STEK material and session-ID cache.
  std::optional<std::string> shared_stek_group;
  // Random key_name per ticket: models servers that ignore the RFC 5077
  // recommended layout.
  bool nonrfc_ticket_layout = false;
  // Renew the ticket on every successful resumption (prolongation server).
  bool reissue_on_resumption = false;
  int listen_port = 0;  // 0 picks an ephemeral port
  std::shared_ptr<Clock> clock;  // defaults to the real clock
};

struct BindFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FixtureDecision {
  std::int64_t ts_ms;
  bool resumed;
  std::string detail;  // "full_handshake" | "resumed" | "ticket_age_reject" | ...
};

class TlsFixture {
 public:
  // Binds and serves immediately. Throws BindFailure when the port is taken.
  static std::unique_ptr<TlsFixture> spawn(FixtureConfig config);
  virtual ~TlsFixture() = default;

  virtual int port() const = 0;
  virtual std::string address() const = 0;  // "127.0.0.1:<port>"
  virtual void shutdown() = 0;

  virtual std::vector<FixtureDecision> decision_log() const = 0;
  virtual std::uint64_t handshakes_completed() const = 0;
};

// Parses the key=value config format used by `resumetrace fixture`.
FixtureConfig parse_fixture_config(std::istream& in);

}  // namespace resumetrace::fixture
