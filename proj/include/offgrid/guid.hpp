#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <cstring>
#include <functional>
#include <string>

namespace offgrid {

// 16-byte object identity. Unique within one client session and stable for
// the node's whole life.
struct Guid {
  std::array<uint8_t, 16> bytes{};

  auto operator<=>(const Guid&) const = default;

  bool is_null() const {
    for (uint8_t b : bytes)
      if (b) return false;
    return true;
  }

  // Deterministic construction from two 64-bit words (big-endian layout).
  static Guid from_u64(uint64_t hi, uint64_t lo) {
    Guid g;
    for (int i = 0; i < 8; ++i) {
      g.bytes[i] = static_cast<uint8_t>(hi >> (56 - 8 * i));
      g.bytes[8 + i] = static_cast<uint8_t>(lo >> (56 - 8 * i));
    }
    return g;
  }

  std::string hex() const {
    static const char* k = "0123456789abcdef";
    std::string s;
    s.reserve(32);
    for (uint8_t b : bytes) {
      s.push_back(k[b >> 4]);
      s.push_back(k[b & 0xF]);
    }
    return s;
  }
};

struct GuidHash {
  std::size_t operator()(const Guid& g) const {
    uint64_t a, b;
    std::memcpy(&a, g.bytes.data(), 8);
    std::memcpy(&b, g.bytes.data() + 8, 8);
    return std::hash<uint64_t>{}(a ^ (b * 0x9E3779B97F4A7C15ULL));
  }
};

}  // namespace offgrid
