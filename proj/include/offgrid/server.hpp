#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "offgrid/clock.hpp"
#include "offgrid/md5.hpp"
#include "offgrid/netsim.hpp"
#include "offgrid/object_model.hpp"
#include "offgrid/tasks.hpp"
#include "offgrid/wire.hpp"

namespace offgrid {

// Code bundles keyed by content hash. A hash, once registered, is never
// remapped. With a directory configured, bundles survive server restarts.
class CodeRegistry {
 public:
  explicit CodeRegistry(std::optional<std::filesystem::path> dir = {});
  bool contains(const Md5Digest& hash) const;
  void put(const Md5Digest& hash, std::vector<uint8_t> bundle);
  // nullptr when unknown.
  const std::vector<uint8_t>* get(const Md5Digest& hash) const;

 private:
  std::filesystem::path path_for(const Md5Digest& hash) const;

  std::optional<std::filesystem::path> dir_;
  mutable std::unordered_map<std::string, std::vector<uint8_t>> bundles_;
};

// Server-side object cache: canonical node bytes plus their content digest,
// keyed by guid. Unbounded, in-memory; desk-scale workloads never evict.
class ServerCache {
 public:
  struct Entry {
    Md5Digest digest{};
    std::vector<uint8_t> node_bytes;  // canonical encoding, content flags only
  };

  const Entry* get(const Guid& g) const;
  void put(const Guid& g, Entry e);
  std::size_t size() const { return entries_.size(); }

 private:
  std::unordered_map<Guid, Entry, GuidHash> entries_;
};

// Maps registered bundle bytes to the task implementations they name.
// Returns nullptr for an unrecognized bundle.
using BundleResolver =
    std::function<std::shared_ptr<const TaskRegistry>(std::span<const uint8_t> bundle)>;

struct ServerOptions {
  // How long a faulted task waits for an object before the session aborts.
  double fault_timeout_s = 60.0;
  // Work units per second for modeled compute time.
  double server_speed = 1e6;
  std::optional<std::filesystem::path> registry_dir;
};

// Server-side middleware: code registration, task execution against a
// deserialized graph, proxy faulting, pipelined push ingestion, the object
// cache, and the modified-state return.
class Server {
 public:
  Server(BundleResolver resolver, ServerOptions opts = {});
  ~Server();

  // Ingest loop for one connection; returns when the peer closes. Sessions
  // on a connection run one at a time; within a session the executor thread
  // and this ingest thread synchronize on the session lock.
  void serve_connection(FrameTransport& transport, Clock& clock);

  struct SessionStats {
    uint32_t fetches_sent = 0;
    uint32_t pushes_received = 0;
    uint32_t duplicate_pushes = 0;
    uint32_t hydrations = 0;
    uint32_t cache_restores = 0;
  };
  SessionStats last_session_stats() const;

  CodeRegistry& code_registry() { return code_; }
  ServerCache& object_cache() { return cache_; }

  struct Session;  // definition in server.cpp

 private:
  struct Connection;

  void handle_frame(Connection& conn, std::vector<uint8_t> frame);
  void start_execute(Connection& conn, wire::Execute msg, uint64_t frame_len);
  void run_execute(Connection& conn, std::shared_ptr<Session> s);
  void handle_object_push(Connection& conn, const wire::ObjectPush& push);
  void abort_session(Connection& conn, Session& s, wire::ErrorCode code, const std::string& msg);
  void save_stats(const Session& s);

  BundleResolver resolver_;
  ServerOptions opts_;
  CodeRegistry code_;
  ServerCache cache_;

  mutable std::mutex stats_mu_;
  SessionStats last_stats_;
};

}  // namespace offgrid
