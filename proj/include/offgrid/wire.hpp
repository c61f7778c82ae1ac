#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "offgrid/guid.hpp"
#include "offgrid/md5.hpp"
#include "offgrid/object_model.hpp"

namespace offgrid::wire {

// Frame layout (normative, bit-exact): len(4, big-endian, length of
// kind+body) | kind(1) | body. Variable-length fields inside multi-field
// bodies carry a u32 length/count prefix; a trailing filler (Probe) runs to
// the end of the frame.
enum class Kind : uint8_t {
  kCodeCheck = 1,
  kCodeNeed = 2,
  kCodeUpload = 3,
  kCodeOk = 4,
  kExecute = 5,
  kObjectFetch = 6,
  kObjectPush = 7,
  kResult = 8,
  kRemoteError = 9,
  kPing = 10,
  kPong = 11,
  kProbe = 12,
};

struct CodeCheck {
  Md5Digest hash{};
};
struct CodeNeed {
  Md5Digest hash{};
};
struct CodeUpload {
  Md5Digest hash{};
  std::vector<uint8_t> bundle;
};
struct CodeOk {
  Md5Digest hash{};
};

inline constexpr uint32_t kNoAlternative = 0xFFFFFFFFu;

// Body: task_id(4) | alt_impl_id(4) | strategy(1) | code_hash(16) |
// target_root(16) | n_params(4) | params | n_statics(4) | statics |
// state_len(4) | state.
struct Execute {
  uint32_t task_id = 0;
  uint32_t alt_impl_id = kNoAlternative;
  Strategy strategy = Strategy::kEager;
  Md5Digest code_hash{};
  Guid target_root;
  std::vector<Guid> param_roots;
  std::vector<Guid> static_roots;
  std::vector<uint8_t> state;
};

struct ObjectFetch {
  Guid guid;
};

struct ObjectPush {
  Guid guid;
  std::vector<uint8_t> node_bytes;
};

// Body: status(1) | ret_len(4) | ret | state_len(4) | state |
// bytes_received(8) | exec_nanos(8).
struct Result {
  uint8_t status = 0;  // 0 ok, 1 error
  std::vector<uint8_t> return_payload;
  std::vector<uint8_t> modified_state;
  uint64_t bytes_received = 0;
  uint64_t exec_nanos = 0;
};

enum class ErrorCode : uint32_t {
  kCodeUnknown = 1,
  kUnknownTask = 2,
  kTaskFailed = 3,
  kProtocol = 4,
  kHashMismatch = 5,
  kCacheMiss = 6,
  kFaultTimeout = 7,
};

struct RemoteError {
  ErrorCode code = ErrorCode::kTaskFailed;
  std::string message;
};

struct Ping {};
struct Pong {};

// An empty filler requests a 64 KiB probe from the peer (downlink
// measurement); a filled one is acknowledged with Pong (uplink measurement).
struct Probe {
  std::vector<uint8_t> filler;
};

inline constexpr std::size_t kProbeBytes = 64 * 1024;

using Message = std::variant<CodeCheck, CodeNeed, CodeUpload, CodeOk, Execute, ObjectFetch,
                             ObjectPush, Result, RemoteError, Ping, Pong, Probe>;

Kind kind_of(const Message& m);

// Produces one complete frame (length prefix included). Throws
// OversizeMessageError when kind+body would exceed 2^31 - 1 bytes.
std::vector<uint8_t> encode(const Message& m);

// Decodes exactly one complete frame; the buffer must hold the frame and
// nothing else. Throws ProtocolError (carrying the byte offset) on unknown
// kind, truncation, or length mismatch.
Message decode(std::span<const uint8_t> frame);

// Length of the whole frame announced by a 4-byte prefix.
std::size_t frame_length(std::span<const uint8_t> prefix4);

}  // namespace offgrid::wire
