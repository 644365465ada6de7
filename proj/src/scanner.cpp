#include "resumetrace/scanner.hpp"

#include <fcntl.h>
#include <netdb.h>
#include <openssl/err.h>
#include <openssl/ssl.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cstring>
#include <istream>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

#include "resumetrace/util.hpp"

namespace resumetrace::scan {

namespace {

struct CtxFree {
  void operator()(SSL_CTX* p) const { SSL_CTX_free(p); }
};
struct SslFree {
  void operator()(SSL* p) const { SSL_free(p); }
};
struct SessFree {
  void operator()(SSL_SESSION* p) const { SSL_SESSION_free(p); }
};
using CtxPtr = std::unique_ptr<SSL_CTX, CtxFree>;
using SslPtr = std::unique_ptr<SSL, SslFree>;
using SessPtr = std::unique_ptr<SSL_SESSION, SessFree>;

std::pair<std::string, int> split_host_port(const std::string& host, int default_port) {
  auto pos = host.rfind(':');
  if (pos == std::string::npos || host.find(':') != pos) {
    return {host, default_port};  // plain name or IPv6-ish, leave untouched
  }
  return {host.substr(0, pos), static_cast<int>(parse_i64(host.substr(pos + 1)))};
}

int connect_tcp(const std::string& name, int port, std::int64_t timeout_s,
                std::string& err_tag) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(name.c_str(), std::to_string(port).c_str(), &hints, &res) != 0) {
    err_tag = "dns_failure";
    return -1;
  }
  int fd = -1;
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    fd = socket(ai->ai_family, SOCK_STREAM, 0);
    if (fd < 0) continue;
    fcntl(fd, F_SETFL, O_NONBLOCK);
    int rc = connect(fd, ai->ai_addr, static_cast<socklen_t>(ai->ai_addrlen));
    if (rc != 0 && errno == EINPROGRESS) {
      pollfd pfd{fd, POLLOUT, 0};
      rc = poll(&pfd, 1, static_cast<int>(timeout_s * 1000));
      if (rc == 1) {
        int soerr = 0;
        socklen_t len = sizeof(soerr);
        getsockopt(fd, SOL_SOCKET, SO_ERROR, &soerr, &len);
        rc = soerr == 0 ? 0 : -1;
      } else {
        rc = -1;
      }
    }
    if (rc == 0) {
      fcntl(fd, F_SETFL, 0);
      timeval tv{static_cast<time_t>(timeout_s), 0};
      setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
      setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
      break;
    }
    close(fd);
    fd = -1;
  }
  freeaddrinfo(res);
  if (fd < 0 && err_tag.empty()) err_tag = "tcp_timeout";
  return fd;
}

struct HandshakeResult {
  bool tcp_ok = false;
  bool tls_ok = false;
  bool reused = false;
  SessPtr session;
  std::string session_id;
  std::string ticket;
  std::optional<std::int64_t> hint_s;
  std::optional<std::string> error;
};

// One TLS 1.2 handshake, optionally presenting a previous session. Never
// verifies the peer certificate: resumption behavior is the measurement
// subject, not authentication.
HandshakeResult do_handshake(const std::string& host, const ScanConfig& config,
                             SSL_SESSION* resume_with) {
  HandshakeResult result;
  auto [name, port] = split_host_port(host, config.port);

  CtxPtr ctx(SSL_CTX_new(TLS_client_method()));
  if (!ctx) {
    result.error = "protocol_error";
    return result;
  }
  SSL_CTX_set_max_proto_version(ctx.get(), TLS1_2_VERSION);
  SSL_CTX_set_verify(ctx.get(), SSL_VERIFY_NONE, nullptr);
  if (!config.offer_tickets) SSL_CTX_set_options(ctx.get(), SSL_OP_NO_TICKET);

  std::string err_tag;
  int fd = connect_tcp(name, port, config.timeout_s, err_tag);
  if (fd < 0) {
    result.error = err_tag;
    return result;
  }
  result.tcp_ok = true;

  SslPtr ssl(SSL_new(ctx.get()));
  if (!ssl) {
    close(fd);
    result.error = "protocol_error";
    return result;
  }
  SSL_set_fd(ssl.get(), fd);
  SSL_set_tlsext_host_name(ssl.get(), name.c_str());
  if (resume_with != nullptr) SSL_set_session(ssl.get(), resume_with);

  ERR_clear_error();
  int rc = SSL_connect(ssl.get());
  if (rc != 1) {
    int err = SSL_get_error(ssl.get(), rc);
    if (err == SSL_ERROR_SSL) {
      result.error = "tls_alert";
    } else if (err == SSL_ERROR_SYSCALL && (errno == EAGAIN || errno == EWOULDBLOCK)) {
      result.error = "tcp_timeout";
    } else {
      result.error = "protocol_error";
    }
    close(fd);
    return result;
  }

  result.tls_ok = true;
  result.reused = SSL_session_reused(ssl.get()) == 1;
  result.session.reset(SSL_get1_session(ssl.get()));
  if (result.session) {
    unsigned int id_len = 0;
    const unsigned char* id = SSL_SESSION_get_id(result.session.get(), &id_len);
    result.session_id.assign(reinterpret_cast<const char*>(id), id_len);
    if (SSL_SESSION_has_ticket(result.session.get())) {
      const unsigned char* tick = nullptr;
      std::size_t tick_len = 0;
      SSL_SESSION_get0_ticket(result.session.get(), &tick, &tick_len);
      result.ticket.assign(reinterpret_cast<const char*>(tick), tick_len);
      result.hint_s = static_cast<std::int64_t>(
          SSL_SESSION_get_ticket_lifetime_hint(result.session.get()));
    }
  }

  SSL_shutdown(ssl.get());
  close(fd);
  return result;
}

}  // namespace

class TlsSession {
 public:
  explicit TlsSession(SessPtr session) : session_(std::move(session)) {}
  SSL_SESSION* get() const { return session_.get(); }

 private:
  SessPtr session_;
};

HandshakeObservation handshake(const std::string& host, const ScanConfig& config,
                               const TlsSession* resume_from) {
  HandshakeResult hs =
      do_handshake(host, config, resume_from != nullptr ? resume_from->get() : nullptr);
  HandshakeObservation obs;
  obs.tcp_ok = hs.tcp_ok;
  obs.tls_ok = hs.tls_ok;
  obs.reused = hs.reused;
  obs.session_id = std::move(hs.session_id);
  obs.ticket = std::move(hs.ticket);
  obs.hint_s = hs.hint_s;
  obs.error = std::move(hs.error);
  if (hs.session) obs.session = std::make_shared<TlsSession>(std::move(hs.session));
  return obs;
}

ScanConfig::ScanConfig()
    : revisit_schedule_s{300, 600, 1200, 2400, 4800, 9600, 19200, 38400, 86400},
      clock(real_clock()) {}

void ScanConfig::validate() const {
  if (max_concurrency < 1) throw std::invalid_argument("max_concurrency must be >= 1");
  if (timeout_s < 1) throw std::invalid_argument("timeout must be >= 1 s");
  if (revisit_schedule_s.empty()) throw std::invalid_argument("empty revisit schedule");
  for (std::size_t i = 0; i < revisit_schedule_s.size(); ++i) {
    if (revisit_schedule_s[i] <= 0) throw std::invalid_argument("delays must be positive");
    if (i > 0 && revisit_schedule_s[i] <= revisit_schedule_s[i - 1]) {
      throw std::invalid_argument("revisit schedule must be strictly ascending");
    }
  }
}

Clock& ScanConfig::clk() const { return clock ? *clock : *real_clock(); }

nlohmann::ordered_json ScanProbeResult::to_json() const {
  nlohmann::ordered_json j;
  j["host"] = host;
  j["ts_ms"] = ts_ms;
  j["tcp_ok"] = tcp_ok;
  j["tls_ok"] = tls_ok;
  j["sid_support"] = session_id_supported;
  j["ticket_support"] = ticket_supported;
  j["sid_hex"] = hex_encode(session_id);
  j["ticket_hex"] = hex_encode(ticket);
  if (ticket_lifetime_hint_s) {
    j["hint_s"] = *ticket_lifetime_hint_s;
  } else {
    j["hint_s"] = nullptr;
  }
  if (error) {
    j["err"] = *error;
  } else {
    j["err"] = nullptr;
  }
  return j;
}

ScanProbeResult ScanProbeResult::from_json(const nlohmann::json& j) {
  ScanProbeResult r;
  r.host = j.at("host").get<std::string>();
  r.ts_ms = j.at("ts_ms").get<std::int64_t>();
  r.tcp_ok = j.at("tcp_ok").get<bool>();
  r.tls_ok = j.at("tls_ok").get<bool>();
  r.session_id_supported = j.at("sid_support").get<bool>();
  r.ticket_supported = j.at("ticket_support").get<bool>();
  r.session_id = hex_decode(j.at("sid_hex").get<std::string>());
  r.ticket = hex_decode(j.at("ticket_hex").get<std::string>());
  if (j.contains("hint_s") && !j["hint_s"].is_null()) {
    r.ticket_lifetime_hint_s = j["hint_s"].get<std::int64_t>();
  }
  if (j.contains("err") && !j["err"].is_null()) {
    r.error = j["err"].get<std::string>();
  }
  return r;
}

ScanProbeResult probe(const std::string& host, const ScanConfig& config) {
  ScanProbeResult result;
  result.host = host;
  result.ts_ms = config.clk().now_ms();

  HandshakeResult hs = do_handshake(host, config, nullptr);
  result.tcp_ok = hs.tcp_ok;
  result.tls_ok = hs.tls_ok;
  result.error = hs.error;
  if (!hs.tls_ok) return result;

  result.session_id = hs.session_id;
  result.session_id_supported = !hs.session_id.empty();
  result.ticket = hs.ticket;
  result.ticket_supported = !hs.ticket.empty();
  result.ticket_lifetime_hint_s = hs.hint_s;
  return result;
}

LifetimeBracket measure_lifetime(const std::string& host, MechanismKind kind,
                                 const ScanConfig& config) {
  if (kind != MechanismKind::SessionId && kind != MechanismKind::SessionTicket) {
    throw std::invalid_argument("measured lifetimes cover session ids and tickets only");
  }
  config.validate();
  ScanConfig trial_config = config;
  trial_config.offer_tickets = kind == MechanismKind::SessionTicket;
  Clock& clk = config.clk();

  LifetimeBracket bracket;
  bool first_trial = true;
  for (std::int64_t delay_s : config.revisit_schedule_s) {
    if (!first_trial) clk.sleep_ms(config.per_host_min_interval_s * 1000);
    first_trial = false;

    bool accepted = false;
    HandshakeResult initial = do_handshake(host, trial_config, nullptr);
    bool have_identifier =
        initial.tls_ok && (kind == MechanismKind::SessionTicket ? !initial.ticket.empty()
                                                                : !initial.session_id.empty());
    if (have_identifier) {
      clk.sleep_ms(delay_s * 1000);
      // Exactly one resumption per initial handshake, so the measurement
      // cannot itself prolong the server-side lifetime.
      HandshakeResult attempt = do_handshake(host, trial_config, initial.session.get());
      accepted = attempt.tls_ok && attempt.reused;
    }
    bracket.trials.emplace_back(delay_s, accepted);
  }

  bracket.lo_s = 0;
  for (const auto& [delay, accepted] : bracket.trials) {
    if (accepted) bracket.lo_s = std::max(bracket.lo_s, delay);
  }
  for (const auto& [delay, accepted] : bracket.trials) {
    if (!accepted && delay > bracket.lo_s) {
      bracket.hi_s = delay;
      break;
    }
  }
  return bracket;
}

std::string extract_stek_keyname(std::string_view ticket) {
  if (ticket.size() < 16) throw TicketTooShort();
  return std::string(ticket.substr(0, 16));
}

RotationSummary estimate_stek_rotation(std::vector<StekObservation> observations) {
  std::map<std::string, std::vector<std::pair<int, std::string>>> by_host;
  for (StekObservation& obs : observations) {
    by_host[obs.host].emplace_back(obs.day_index, std::move(obs.key_name));
  }

  RotationSummary summary;
  for (auto& [host, days] : by_host) {
    std::sort(days.begin(), days.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    int best = 1;
    int run = 1;
    for (std::size_t i = 1; i < days.size(); ++i) {
      if (days[i].first == days[i - 1].first + 1 && days[i].second == days[i - 1].second) {
        ++run;
      } else {
        run = 1;
      }
      best = std::max(best, run);
    }
    RotationEstimate estimate;
    estimate.host = host;
    estimate.rotation_days = best;
    // A key that never repeats may be per-ticket keys or a layout that
    // simply isn't the recommended one; either way only a lower bound.
    estimate.lower_bound = best == 1;
    summary.histogram_days[best]++;
    summary.per_host.push_back(std::move(estimate));
  }
  return summary;
}

SharedStateResult shared_state_groups(const std::vector<std::string>& hosts,
                                      const ScanConfig& config) {
  config.validate();
  std::vector<std::string> order(hosts);
  std::sort(order.begin(), order.end());
  order.erase(std::unique(order.begin(), order.end()), order.end());

  const std::size_t n = order.size();
  SharedStateResult result;
  if (n == 0) return result;

  Clock& clk = config.clk();
  std::map<std::string, std::int64_t> last_contact;
  auto polite = [&](const std::string& host) {
    auto it = last_contact.find(host);
    if (it != last_contact.end()) {
      std::int64_t since = clk.now_ms() - it->second;
      std::int64_t min_ms = config.per_host_min_interval_s * 1000;
      if (since < min_ms) clk.sleep_ms(min_ms - since);
    }
    last_contact[host] = clk.now_ms();
  };

  // One initial handshake per host captures the state to replay.
  std::vector<SessPtr> sessions(n);
  for (std::size_t i = 0; i < n; ++i) {
    polite(order[i]);
    HandshakeResult hs = do_handshake(order[i], config, nullptr);
    if (hs.tls_ok) {
      sessions[i] = std::move(hs.session);
    } else {
      ++result.pair_errors;
    }
  }

  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };

  for (std::size_t i = 0; i < n; ++i) {
    if (!sessions[i]) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j || find(i) == find(j)) continue;
      polite(order[j]);
      HandshakeResult attempt = do_handshake(order[j], config, sessions[i].get());
      if (!attempt.tcp_ok && attempt.error) ++result.pair_errors;
      if (attempt.tls_ok && attempt.reused) parent[find(j)] = find(i);
    }
  }

  std::map<std::size_t, std::vector<std::string>> components;
  for (std::size_t i = 0; i < n; ++i) components[find(i)].push_back(order[i]);
  for (auto& [root, members] : components) {
    std::sort(members.begin(), members.end());
    if (members.size() >= 2) {
      result.groups.push_back(std::move(members));
    } else {
      result.singletons.push_back(members.front());
    }
  }
  std::sort(result.groups.begin(), result.groups.end());
  std::sort(result.singletons.begin(), result.singletons.end());
  return result;
}

std::vector<std::string> load_host_list(std::istream& in) {
  std::vector<std::string> hosts;
  std::string line;
  while (std::getline(in, line)) {
    std::string_view sv = trim(line);
    if (sv.empty() || sv.front() == '#') continue;
    auto fields = split(sv, ',');
    if (fields.size() >= 2) {
      hosts.emplace_back(trim(fields[1]));  // Alexa-style `rank,host`
    } else {
      hosts.emplace_back(sv);
    }
  }
  return hosts;
}

void scan_hosts(const std::vector<std::string>& hosts, const ScanConfig& config,
                std::ostream& out, const std::vector<std::string>& already_done) {
  config.validate();
  std::vector<std::string> pending;
  for (const std::string& h : hosts) {
    if (std::find(already_done.begin(), already_done.end(), h) == already_done.end()) {
      pending.push_back(h);
    }
  }

  std::atomic<std::size_t> next{0};
  std::mutex out_mu;
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < pending.size(); i = next.fetch_add(1)) {
      ScanProbeResult r = probe(pending[i], config);
      std::lock_guard lk(out_mu);
      out << r.to_json().dump() << '\n';
      out.flush();
    }
  };

  unsigned workers = static_cast<unsigned>(
      std::min<std::size_t>(static_cast<std::size_t>(config.max_concurrency), pending.size()));
  if (workers <= 1) {
    worker();
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
}

}  // namespace resumetrace::scan
