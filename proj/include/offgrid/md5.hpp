#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>

namespace offgrid {

using Md5Digest = std::array<uint8_t, 16>;

// One-shot MD5. Used for code-bundle identity and object content hashes;
// not a security boundary.
Md5Digest md5(std::span<const uint8_t> data);

std::string to_hex(const Md5Digest& d);

// Strict 32-hex-char parse; throws ConfigError on anything else.
Md5Digest md5_from_hex(const std::string& hex);

}  // namespace offgrid
