#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace resumetrace {

std::string hex_encode(std::string_view bytes);
std::string hex_decode(std::string_view hex);  // throws std::invalid_argument

std::vector<std::string> split(std::string_view line, char sep);
std::string_view trim(std::string_view s);

// Keyed and unkeyed digests (OpenSSL-backed).
std::string hmac_sha256(std::string_view key, std::string_view data);  // 32 raw bytes
std::string sha256(std::string_view data);                             // 32 raw bytes
std::string sha256_hex(std::string_view data);

std::string read_file(const std::string& path);  // throws on missing file

// Parses a signed integer, rejecting trailing garbage.
std::int64_t parse_i64(std::string_view s);

}  // namespace resumetrace
