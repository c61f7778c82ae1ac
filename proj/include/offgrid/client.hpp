#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "offgrid/clock.hpp"
#include "offgrid/md5.hpp"
#include "offgrid/netsim.hpp"
#include "offgrid/object_model.hpp"
#include "offgrid/tasks.hpp"

namespace offgrid {

struct NetworkProfile {
  double rtt = 0;         // seconds
  double uplink = 0;      // bytes/second
  double downlink = 0;    // bytes/second
  double last_updated = 0;
  bool reachable = false;
};

struct Placement {
  enum class Kind : uint8_t { kLocal, kRemote };
  Kind kind = Kind::kLocal;
  Strategy strategy = Strategy::kEager;  // meaningful when kind == kRemote
  bool fell_back = false;                // remote attempted, local executed

  static Placement local() { return {}; }
  static Placement remote(Strategy s) { return {Kind::kRemote, s, false}; }
  bool is_remote() const { return kind == Kind::kRemote; }
};

struct TransferMetrics {
  uint64_t bytes_up = 0;
  uint64_t bytes_down = 0;
  double wall_time = 0;
  Placement placement;
  uint32_t fetch_round_trips = 0;
  uint32_t cache_hits = 0;
};

// Calibration constants of the cost model, in work units per second. The
// virtual clock uses them as-is; real-clock runs calibrate local speed with a
// timing loop and scale the server by a configured ratio.
struct DecisionConstants {
  double local_speed = 1e5;
  double server_speed = 1e6;
  // A priori estimate of the result downlink; the engine cannot know the
  // modified-state size before executing.
  double result_bytes_estimate = 64;
};

// Per-invocation sizing the decision engine works from.
struct StateSizing {
  uint64_t state_size = 0;     // eager upload bytes (cache elision applied)
  uint64_t elidable_size = 0;  // encoded bytes of proxyable, non-cached nodes
  uint32_t n_proxies = 0;      // count of those nodes
  double compute_hint = 0;     // work units
};

// Local vs remote placement and strategy choice.
//   T_local = hint/local_speed
//   T_eager = rtt + state/up + hint/server_speed + down_est/down
//   T_lazy  = rtt + (state - elidable + 29n)/up + hint/server_speed + down_est/down
//   T_pipe  = rtt + (state - elidable + 29n)/up
//                 + max(elidable/up, hint/server_speed) + down_est/down
// Remote only when reachable, offloadable, and strictly faster; exact ties
// prefer Local, then Eager, then Pipelined, then Lazy.
Placement decide(const StateSizing& sizing, const NetworkProfile& profile,
                 const DecisionConstants& constants, bool offloadable);

double estimate_remote_seconds(const StateSizing& sizing, const NetworkProfile& profile,
                               const DecisionConstants& constants, Strategy strategy);

// Cache elision test: the node's current content digest equals the copy the
// server last acknowledged.
bool should_elide(const ObjectNode& node, const ClientCacheView& cache);

enum class PlacementOverride : uint8_t { kAuto, kLocal, kEager, kLazy, kPipelined };

struct ClientOptions {
  bool cache_enabled = true;
  PlacementOverride placement = PlacementOverride::kAuto;
  double timeout_s = 10.0;
  DecisionConstants decision;
  std::vector<std::string> static_roots;  // names resolved via graph.statics
};

struct InvokeResult {
  std::vector<uint8_t> return_payload;
  TransferMetrics metrics;
};

// Mobile-side middleware: task registry, code registration, decision engine,
// network profiler, object cache, strategy execution, and silent timeout
// fallback to local execution.
class Client {
 public:
  Client(FrameTransport& transport, Clock& clock, std::vector<uint8_t> code_bundle,
         ClientOptions opts = {});

  void register_task(TaskDescriptor d);

  // CODE_CHECK / CODE_UPLOAD handshake; idempotent per bundle. Returns false
  // (and leaves the profile unreachable) when the server cannot be reached.
  bool ensure_code_registered();

  // Three ping medians plus one 64 KiB probe each way, EWMA-smoothed over the
  // prior profile.
  NetworkProfile profile_network();

  // Runs the task under the decided placement. Remote failures silently fall
  // back to local execution on the unmodified graph; local task exceptions
  // propagate.
  InvokeResult invoke(uint32_t task_id, ObjectGraph& graph, const Guid& target,
                      std::span<const Guid> params);

  NetworkProfile& profile() { return profile_; }
  ClientCacheView& cache_view() { return cache_; }
  const Md5Digest& code_hash() const { return code_hash_; }
  ClientOptions& options() { return opts_; }

 private:
  std::vector<Guid> gather_roots(const ObjectGraph& graph, const Guid& target,
                                 std::span<const Guid> params) const;
  StateSizing measure(const ObjectGraph& graph, std::span<const Guid> roots,
                      const TaskDescriptor& task, const Guid& target,
                      std::span<const Guid> params) const;
  InvokeResult run_local(const TaskDescriptor& task, ObjectGraph& graph, const Guid& target,
                         std::span<const Guid> params, Placement placement);
  // Throws RemoteFailure on timeout, disconnect, or server-reported error.
  InvokeResult offload(const TaskDescriptor& task, Strategy strategy, ObjectGraph& graph,
                       const Guid& target, std::span<const Guid> params,
                       std::span<const Guid> roots, const StateSizing& sizing);

  FrameTransport& transport_;
  Clock& clock_;
  ClientOptions opts_;
  std::vector<uint8_t> bundle_;
  Md5Digest code_hash_;
  bool code_registered_ = false;
  TaskRegistry tasks_;
  NetworkProfile profile_;
  ClientCacheView cache_;
};

}  // namespace offgrid
