#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace offgrid {

// Base class for all errors raised by the middleware.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed bytes on the wire or in a serialized graph stream.
// Carries the byte offset at which decoding gave up.
class ProtocolError : public Error {
 public:
  explicit ProtocolError(const std::string& what, std::size_t offset = 0)
      : Error(what + " (offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// A guid that does not resolve to a node in the graph.
class UnknownObjectError : public Error {
 public:
  using Error::Error;
};

// An operation applied to an object in the wrong state
// (e.g. hydrating a node that is not a proxy).
class IllegalStateError : public Error {
 public:
  using Error::Error;
};

// Duplicate registration (task id, code hash remap).
class ConflictError : public Error {
 public:
  using Error::Error;
};

// Invalid run configuration or workload scale.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Message body exceeding the frame length limit (2^31 - 1 bytes).
class OversizeMessageError : public Error {
 public:
  using Error::Error;
};

// Internal client-side signal: the remote side failed or timed out and the
// invocation must fall back to local execution. Never escapes invoke().
class RemoteFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace offgrid
