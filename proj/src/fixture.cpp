#include "resumetrace/fixture.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <openssl/core_names.h>
#include <openssl/err.h>
#include <openssl/evp.h>
#include <openssl/rand.h>
#include <openssl/ssl.h>
#include <openssl/x509.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <condition_variable>
#include <cstring>
#include <istream>
#include <map>
#include <mutex>
#include <thread>

#include "resumetrace/util.hpp"

namespace resumetrace::fixture {

namespace {

// --- process-wide self-signed credentials -----------------------------------

struct Credentials {
  EVP_PKEY* key = nullptr;
  X509* cert = nullptr;
};

const Credentials& fixture_credentials() {
  static Credentials creds = [] {
    Credentials c;
    c.key = EVP_EC_gen("P-256");
    if (c.key == nullptr) throw std::runtime_error("fixture key generation failed");
    c.cert = X509_new();
    X509_set_version(c.cert, 2);
    ASN1_INTEGER_set(X509_get_serialNumber(c.cert), 1);
    X509_gmtime_adj(X509_getm_notBefore(c.cert), -3600);
    X509_gmtime_adj(X509_getm_notAfter(c.cert), 10L * 365 * 24 * 3600);
    X509_set_pubkey(c.cert, c.key);
    X509_NAME* name = X509_get_subject_name(c.cert);
    X509_NAME_add_entry_by_txt(name, "CN", MBSTRING_ASC,
                               reinterpret_cast<const unsigned char*>("resumetrace-fixture"),
                               -1, -1, 0);
    X509_set_issuer_name(c.cert, name);
    if (X509_sign(c.cert, c.key, EVP_sha256()) == 0) {
      throw std::runtime_error("fixture cert signing failed");
    }
    return c;
  }();
  return creds;
}

// --- shared STEK / session-cache group ---------------------------------------

struct SessionEntry {
  std::string der;
  std::int64_t issued_ms;
};

// Fixtures with the same shared_stek_group decrypt each other's tickets and
// resume each other's session IDs.
struct StekGroup {
  std::string seed;
  std::mutex mu;
  std::map<std::string, SessionEntry> sid_cache;
};

std::shared_ptr<StekGroup> group_for(const std::optional<std::string>& id) {
  static std::mutex mu;
  static std::map<std::string, std::weak_ptr<StekGroup>> registry;
  static std::uint64_t anon_counter = 0;

  std::lock_guard lk(mu);
  if (!id) {
    auto group = std::make_shared<StekGroup>();
    group->seed = "anon#" + std::to_string(anon_counter++);
    return group;
  }
  auto& slot = registry[*id];
  if (auto group = slot.lock()) return group;
  auto group = std::make_shared<StekGroup>();
  group->seed = "group#" + *id;
  slot = group;
  return group;
}

// Key material is derived from (group seed, key_name), so any group member
// can decrypt any name the group ever issued without extra state. Foreign
// tickets derive the wrong keys and fail the HMAC check, which OpenSSL
// treats as a plain full-handshake fallback.
std::string stek_name_for(const std::string& seed, std::uint64_t rotation_index) {
  return hmac_sha256(seed, "name:" + std::to_string(rotation_index)).substr(0, 16);
}

void stek_material_for(const std::string& seed, std::string_view name,
                       unsigned char aes_key[32], unsigned char hmac_key[32]) {
  std::string aes = hmac_sha256(seed, "aes:" + std::string(name));
  std::string mac = hmac_sha256(seed, "mac:" + std::string(name));
  std::memcpy(aes_key, aes.data(), 32);
  std::memcpy(hmac_key, mac.data(), 32);
}

void write_be64(unsigned char* out, std::uint64_t v) {
  for (int i = 7; i >= 0; --i) {
    out[i] = static_cast<unsigned char>(v & 0xff);
    v >>= 8;
  }
}

std::uint64_t read_be64(const unsigned char* in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = v << 8 | in[i];
  return v;
}

int fixture_ex_index() {
  static int index = SSL_CTX_get_ex_new_index(0, nullptr, nullptr, nullptr, nullptr);
  return index;
}

class FixtureImpl;
FixtureImpl* fixture_of(SSL* ssl);

// --- fixture -----------------------------------------------------------------

class FixtureImpl final : public TlsFixture {
 public:
  explicit FixtureImpl(FixtureConfig config);
  ~FixtureImpl() override { shutdown(); }

  int port() const override { return port_; }
  std::string address() const override { return "127.0.0.1:" + std::to_string(port_); }
  void shutdown() override;

  std::vector<FixtureDecision> decision_log() const override {
    std::lock_guard lk(log_mu_);
    return log_;
  }

  std::uint64_t handshakes_completed() const override { return handshakes_.load(); }

  int on_ticket_key(unsigned char key_name[16], unsigned char* iv, EVP_CIPHER_CTX* cipher,
                    EVP_MAC_CTX* hmac, int enc);
  void cache_store(SSL_SESSION* session);
  SSL_SESSION* cache_lookup(const unsigned char* id, int len);

  Clock& clk() { return config_.clock ? *config_.clock : *real_clock(); }

 private:
  void serve();
  void handle_connection(int fd);
  void log_decision(bool resumed, std::string detail) {
    std::lock_guard lk(log_mu_);
    log_.push_back({clk().now_ms(), resumed, std::move(detail)});
  }

  FixtureConfig config_;
  std::shared_ptr<StekGroup> group_;
  SSL_CTX* ctx_ = nullptr;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> stop_{false};
  std::thread acceptor_;
  std::atomic<std::uint64_t> handshakes_{0};
  std::atomic<std::uint64_t> tickets_issued_{0};

  mutable std::mutex log_mu_;
  std::vector<FixtureDecision> log_;

  std::mutex conn_mu_;
  std::condition_variable conn_cv_;
  int active_connections_ = 0;
};

FixtureImpl* fixture_of(SSL* ssl) {
  SSL_CTX* ctx = SSL_get_SSL_CTX(ssl);
  return static_cast<FixtureImpl*>(SSL_CTX_get_ex_data(ctx, fixture_ex_index()));
}

extern "C" {

static int fixture_ticket_key_cb(SSL* ssl, unsigned char key_name[16], unsigned char* iv,
                                 EVP_CIPHER_CTX* cipher, EVP_MAC_CTX* hmac, int enc) {
  FixtureImpl* fixture = fixture_of(ssl);
  if (fixture == nullptr) return -1;
  return fixture->on_ticket_key(key_name, iv, cipher, hmac, enc);
}

static int fixture_new_session_cb(SSL* ssl, SSL_SESSION* session) {
  if (FixtureImpl* fixture = fixture_of(ssl)) fixture->cache_store(session);
  return 0;  // we kept our own serialized copy
}

static SSL_SESSION* fixture_get_session_cb(SSL* ssl, const unsigned char* id, int len,
                                           int* copy) {
  *copy = 0;
  FixtureImpl* fixture = fixture_of(ssl);
  return fixture ? fixture->cache_lookup(id, len) : nullptr;
}

}  // extern "C"

FixtureImpl::FixtureImpl(FixtureConfig config)
    : config_(std::move(config)), group_(group_for(config_.shared_stek_group)) {
  if (config_.accept_window_s < 0) throw std::invalid_argument("accept_window_s must be >= 0");
  if (config_.stek_rotate_every_k < 0) throw std::invalid_argument("rotation k must be >= 1");
  if (config_.enable_tickets && config_.ticket_hint_s < 1) {
    throw std::invalid_argument("ticket_hint_s must be >= 1");
  }

  listen_fd_ = socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw BindFailure("socket() failed");
  int one = 1;
  setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<std::uint16_t>(config_.listen_port));
  if (bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 ||
      listen(listen_fd_, 32) != 0) {
    close(listen_fd_);
    throw BindFailure("cannot bind 127.0.0.1:" + std::to_string(config_.listen_port));
  }
  socklen_t addr_len = sizeof(addr);
  getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &addr_len);
  port_ = ntohs(addr.sin_port);

  ctx_ = SSL_CTX_new(TLS_server_method());
  if (ctx_ == nullptr) {
    close(listen_fd_);
    throw std::runtime_error("SSL_CTX_new failed");
  }
  SSL_CTX_set_min_proto_version(ctx_, TLS1_2_VERSION);
  SSL_CTX_set_max_proto_version(ctx_, TLS1_2_VERSION);
  const Credentials& creds = fixture_credentials();
  SSL_CTX_use_certificate(ctx_, creds.cert);
  SSL_CTX_use_PrivateKey(ctx_, creds.key);
  SSL_CTX_set_ex_data(ctx_, fixture_ex_index(), this);

  // The ticket lifetime hint on the wire is the session timeout.
  SSL_CTX_set_timeout(ctx_, config_.ticket_hint_s);

  if (config_.enable_tickets) {
    SSL_CTX_set_tlsext_ticket_key_evp_cb(ctx_, fixture_ticket_key_cb);
  } else {
    SSL_CTX_set_options(ctx_, SSL_OP_NO_TICKET);
  }

  if (config_.enable_session_ids) {
    SSL_CTX_set_session_cache_mode(
        ctx_, SSL_SESS_CACHE_SERVER | SSL_SESS_CACHE_NO_INTERNAL | SSL_SESS_CACHE_NO_AUTO_CLEAR);
    SSL_CTX_sess_set_new_cb(ctx_, fixture_new_session_cb);
    SSL_CTX_sess_set_get_cb(ctx_, fixture_get_session_cb);
  } else {
    SSL_CTX_set_session_cache_mode(ctx_, SSL_SESS_CACHE_OFF);
  }

  acceptor_ = std::thread([this] { serve(); });
}

void FixtureImpl::shutdown() {
  bool expected = false;
  if (!stop_.compare_exchange_strong(expected, true)) return;
  if (acceptor_.joinable()) acceptor_.join();
  {
    std::unique_lock lk(conn_mu_);
    conn_cv_.wait(lk, [this] { return active_connections_ == 0; });
  }
  if (listen_fd_ >= 0) close(listen_fd_);
  if (ctx_ != nullptr) SSL_CTX_free(ctx_);
  ctx_ = nullptr;
  listen_fd_ = -1;
}

void FixtureImpl::serve() {
  while (!stop_.load()) {
    pollfd pfd{listen_fd_, POLLIN, 0};
    int rc = poll(&pfd, 1, 100);
    if (rc <= 0) continue;
    int fd = accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    {
      std::lock_guard lk(conn_mu_);
      ++active_connections_;
    }
    std::thread([this, fd] {
      handle_connection(fd);
      std::lock_guard lk(conn_mu_);
      --active_connections_;
      conn_cv_.notify_all();
    }).detach();
  }
}

void FixtureImpl::handle_connection(int fd) {
  timeval tv{10, 0};
  setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
  setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));

  SSL* ssl = SSL_new(ctx_);
  if (ssl == nullptr) {
    close(fd);
    return;
  }
  SSL_set_fd(ssl, fd);
  ERR_clear_error();
  int rc = SSL_accept(ssl);
  if (rc == 1) {
    bool resumed = SSL_session_reused(ssl) == 1;
    handshakes_.fetch_add(1);
    log_decision(resumed, resumed ? "resumed" : "full_handshake");
    SSL_shutdown(ssl);
  } else {
    log_decision(false, "handshake_error");
  }
  SSL_free(ssl);
  close(fd);
}

int FixtureImpl::on_ticket_key(unsigned char key_name[16], unsigned char* iv,
                               EVP_CIPHER_CTX* cipher, EVP_MAC_CTX* hmac, int enc) {
  unsigned char aes_key[32];
  unsigned char hmac_key[32];
  OSSL_PARAM params[2] = {
      OSSL_PARAM_construct_utf8_string(OSSL_MAC_PARAM_DIGEST, const_cast<char*>("SHA256"), 0),
      OSSL_PARAM_construct_end(),
  };

  if (enc == 1) {
    std::string name;
    if (config_.nonrfc_ticket_layout) {
      unsigned char random_name[16];
      RAND_bytes(random_name, sizeof(random_name));
      name.assign(reinterpret_cast<char*>(random_name), sizeof(random_name));
    } else {
      std::uint64_t issued = tickets_issued_.fetch_add(1);
      std::uint64_t index =
          config_.stek_rotate_every_k > 0
              ? issued / static_cast<std::uint64_t>(config_.stek_rotate_every_k)
              : 0;
      name = stek_name_for(group_->seed, index);
    }
    stek_material_for(group_->seed, name, aes_key, hmac_key);
    std::memcpy(key_name, name.data(), 16);

    // 8 random bytes plus the big-endian issue time (fixture clock), so the
    // decrypt path can enforce accept_window without extra server state.
    RAND_bytes(iv, 8);
    write_be64(iv + 8, static_cast<std::uint64_t>(clk().now_s()));
    if (EVP_EncryptInit_ex(cipher, EVP_aes_256_cbc(), nullptr, aes_key, iv) != 1) return -1;
    if (EVP_MAC_init(hmac, hmac_key, sizeof(hmac_key), params) != 1) return -1;
    return 1;
  }

  std::int64_t issued_s = static_cast<std::int64_t>(read_be64(iv + 8));
  std::int64_t age_s = clk().now_s() - issued_s;
  if (age_s > config_.accept_window_s || age_s < 0) {
    log_decision(false, "ticket_age_reject");
    return 0;  // unknown/expired: fall back to a full handshake
  }
  stek_material_for(group_->seed, std::string_view(reinterpret_cast<char*>(key_name), 16),
                    aes_key, hmac_key);
  if (EVP_DecryptInit_ex(cipher, EVP_aes_256_cbc(), nullptr, aes_key, iv) != 1) return -1;
  if (EVP_MAC_init(hmac, hmac_key, sizeof(hmac_key), params) != 1) return -1;
  // 2 renews the ticket on this resumption (the prolongation server), 1
  // resumes without reissuing.
  return config_.reissue_on_resumption ? 2 : 1;
}

void FixtureImpl::cache_store(SSL_SESSION* session) {
  unsigned int id_len = 0;
  const unsigned char* id = SSL_SESSION_get_id(session, &id_len);
  if (id_len == 0) return;
  int der_len = i2d_SSL_SESSION(session, nullptr);
  if (der_len <= 0) return;
  std::string der(static_cast<std::size_t>(der_len), '\0');
  unsigned char* out = reinterpret_cast<unsigned char*>(der.data());
  i2d_SSL_SESSION(session, &out);

  std::lock_guard lk(group_->mu);
  group_->sid_cache[std::string(reinterpret_cast<const char*>(id), id_len)] = {
      std::move(der), clk().now_ms()};
}

SSL_SESSION* FixtureImpl::cache_lookup(const unsigned char* id, int len) {
  std::string key(reinterpret_cast<const char*>(id), static_cast<std::size_t>(len));
  std::string der;
  {
    std::lock_guard lk(group_->mu);
    auto it = group_->sid_cache.find(key);
    if (it == group_->sid_cache.end()) {
      log_decision(false, "sid_unknown");
      return nullptr;
    }
    std::int64_t age_ms = clk().now_ms() - it->second.issued_ms;
    if (age_ms > config_.accept_window_s * 1000) {
      group_->sid_cache.erase(it);
      log_decision(false, "sid_expired");
      return nullptr;
    }
    der = it->second.der;
  }
  const unsigned char* p = reinterpret_cast<const unsigned char*>(der.data());
  SSL_SESSION* session = d2i_SSL_SESSION(nullptr, &p, static_cast<long>(der.size()));
  if (session == nullptr) return nullptr;
  // The wall-clock expiry is ours to enforce; keep OpenSSL's own check out
  // of the way (the fixture may run on a virtual clock).
  SSL_SESSION_set_time(session, time(nullptr));
  return session;
}

}  // namespace

std::unique_ptr<TlsFixture> TlsFixture::spawn(FixtureConfig config) {
  return std::make_unique<FixtureImpl>(std::move(config));
}

FixtureConfig parse_fixture_config(std::istream& in) {
  FixtureConfig config;
  std::string line;
  auto as_bool = [](std::string_view v) {
    return v == "on" || v == "true" || v == "1" || v == "yes";
  };
  while (std::getline(in, line)) {
    std::string_view sv = trim(line);
    if (sv.empty() || sv.front() == '#') continue;
    auto eq = sv.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument("fixture config lines are key=value: " + std::string(sv));
    }
    std::string_view key = trim(sv.substr(0, eq));
    std::string_view value = trim(sv.substr(eq + 1));
    if (key == "session_ids") {
      config.enable_session_ids = as_bool(value);
    } else if (key == "tickets") {
      config.enable_tickets = as_bool(value);
    } else if (key == "ticket_hint_s") {
      config.ticket_hint_s = parse_i64(value);
    } else if (key == "accept_window_s") {
      config.accept_window_s = parse_i64(value);
    } else if (key == "stek_rotate_every_k") {
      config.stek_rotate_every_k = static_cast<int>(parse_i64(value));
    } else if (key == "shared_stek_group") {
      config.shared_stek_group = std::string(value);
    } else if (key == "nonrfc_ticket_layout") {
      config.nonrfc_ticket_layout = as_bool(value);
    } else if (key == "reissue_on_resumption") {
      config.reissue_on_resumption = as_bool(value);
    } else if (key == "port") {
      config.listen_port = static_cast<int>(parse_i64(value));
    } else {
      throw std::invalid_argument("unknown fixture config key: " + std::string(key));
    }
  }
  return config;
}

}  // namespace resumetrace::fixture
