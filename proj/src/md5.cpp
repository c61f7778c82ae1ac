#include "offgrid/md5.hpp"

#include <openssl/evp.h>

#include <stdexcept>

#include "offgrid/errors.hpp"

namespace offgrid {

Md5Digest md5(std::span<const uint8_t> data) {
  Md5Digest out{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_md5(), nullptr) != 1 ||
      len != out.size()) {
    throw std::runtime_error("md5 digest failed");
  }
  return out;
}

std::string to_hex(const Md5Digest& d) {
  static const char* k = "0123456789abcdef";
  std::string s;
  s.reserve(32);
  for (uint8_t b : d) {
    s.push_back(k[b >> 4]);
    s.push_back(k[b & 0xF]);
  }
  return s;
}

static int hex_val(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

Md5Digest md5_from_hex(const std::string& hex) {
  if (hex.size() != 32) throw ConfigError("md5 hex must be 32 chars: " + hex);
  Md5Digest d{};
  for (int i = 0; i < 16; ++i) {
    int hi = hex_val(hex[2 * i]), lo = hex_val(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw ConfigError("bad md5 hex: " + hex);
    d[i] = static_cast<uint8_t>(hi << 4 | lo);
  }
  return d;
}

}  // namespace offgrid
