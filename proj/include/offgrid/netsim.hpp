#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "offgrid/clock.hpp"

namespace offgrid {

enum class Direction { kUp, kDown };  // up: client -> server

// Emulated point-to-point link: symmetric latency halves, asymmetric
// bandwidth, optional fault injection that silently drops every frame once
// tripped.
struct LinkConfig {
  std::string name = "custom";
  double rtt = 0.0;                  // seconds, full round trip
  double up_bandwidth = 1e9;         // bytes/second
  double down_bandwidth = 1e9;       // bytes/second
  std::optional<uint64_t> blackhole_after_bytes;  // cumulative, both directions
  std::optional<double> blackhole_after_time;     // seconds
};

// wifi / 3g / loopback defaults; all overridable.
std::map<std::string, LinkConfig> presets();

// Parses the CLI form: wifi|3g|loopback|custom:<rtt_ms>,<up_Bps>,<down_Bps>.
LinkConfig parse_network(const std::string& flag);

// Pure delivery arithmetic: one direction is a FIFO pipe whose free time
// advances by serialization time.
//   start = max(enqueue_time, free_time)
//   free_time' = start + len/bandwidth
//   delivery = start + rtt/2 + len/bandwidth
double schedule_delivery(const LinkConfig& cfg, Direction dir, std::size_t frame_len,
                         double enqueue_time, double& free_time);

enum class RecvStatus { kOk, kTimeout, kClosed };

// One endpoint of a connection; frames are opaque and atomic.
class FrameTransport {
 public:
  virtual ~FrameTransport() = default;
  // Never blocks on emulated links; a closed or blackholed link swallows the
  // frame.
  virtual void send(std::vector<uint8_t> frame) = 0;
  virtual RecvStatus recv(double timeout_s, std::vector<uint8_t>& out) = 0;
  virtual uint64_t bytes_sent() const = 0;
  virtual uint64_t bytes_received() const = 0;
  virtual void close() = 0;
};

// ---------------------------------------------------------------------------
// Virtual time. Threads participating in a virtual-clock run register as
// actors; exactly one actor executes at a time and the clock only advances
// when every actor is parked. The single-runner discipline makes every
// schedule (and therefore every metric) reproducible.
class VirtualWorld : public Clock {
 public:
  VirtualWorld();
  ~VirtualWorld() override;

  double now() const override;
  void charge(double seconds) override;
  std::unique_ptr<CondVar> make_condvar() override;

  // Runs fn on a new thread as an actor. The actor is registered (ready at
  // the current virtual time) before spawn returns, so schedules do not
  // depend on OS thread startup timing. Callers must already hold an actor
  // (register a Scope first) or the new actor may advance the clock alone.
  std::thread spawn(std::function<void()> fn) override;

  // Registers the calling thread as an actor for the scope's lifetime.
  class Scope {
   public:
    explicit Scope(VirtualWorld& w);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    VirtualWorld& w_;
    struct Actor* a_;
  };

  // --- low-level scheduling hooks (virtual links, condvars) ---
  std::mutex& mu() { return mu_; }
  double now_locked() const { return now_; }
  // Parks the calling actor until `wake_at` or an earlier poke on `key`.
  void park_until_locked(std::unique_lock<std::mutex>& wl, double wake_at, const void* key);
  // Lets actors parked on `key` resume once the clock reaches `at_time`
  // (clamped to now). Safe to call from non-actor threads.
  void poke_locked(const void* key, double at_time);

 private:
  struct Actor* register_actor_locked();
  void unregister_actor(struct Actor* a);
  void run_actor(struct Actor* a, std::function<void()> fn);
  void schedule_next_locked();

  mutable std::mutex mu_;
  double now_ = 0.0;
  uint64_t next_seq_ = 0;
  std::vector<struct Actor*> actors_;

  friend class VirtualCondVar;
};

// ---------------------------------------------------------------------------
// Links. Both ends share the config and the conservation counters; the
// counters are the single source of truth for reported byte counts.

struct LinkCounters {
  uint64_t offered_up = 0;
  uint64_t offered_down = 0;
  uint64_t delivered_up = 0;
  uint64_t delivered_down = 0;
};

class VirtualLink {
 public:
  VirtualLink(VirtualWorld& world, LinkConfig cfg);
  ~VirtualLink();

  FrameTransport& client_end();
  FrameTransport& server_end();
  LinkCounters counters() const;
  void close();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Same arithmetic over wall time; senders never block, receivers sleep until
// the head frame's delivery time. Used for demos and real-clock bench runs.
class RealLink {
 public:
  RealLink(RealClock& clock, LinkConfig cfg);
  ~RealLink();

  FrameTransport& client_end();
  FrameTransport& server_end();
  LinkCounters counters() const;
  void close();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace offgrid
