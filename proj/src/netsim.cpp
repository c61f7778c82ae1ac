#include "offgrid/netsim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "offgrid/errors.hpp"

namespace offgrid {

std::map<std::string, LinkConfig> presets() {
  std::map<std::string, LinkConfig> p;
  p["wifi"] = LinkConfig{"wifi", 0.010, 2.5e6, 2.5e6, {}, {}};
  p["3g"] = LinkConfig{"3g", 0.150, 125e3, 500e3, {}, {}};
  p["loopback"] = LinkConfig{"loopback", 0.0001, 1e9, 1e9, {}, {}};
  return p;
}

LinkConfig parse_network(const std::string& flag) {
  auto p = presets();
  if (auto it = p.find(flag); it != p.end()) return it->second;
  if (flag.rfind("custom:", 0) == 0) {
    std::string rest = flag.substr(7);
    std::replace(rest.begin(), rest.end(), ',', ' ');
    std::istringstream in(rest);
    double rtt_ms, up, down;
    if (!(in >> rtt_ms >> up >> down) || up <= 0 || down <= 0 || rtt_ms < 0)
      throw ConfigError("bad custom network spec: " + flag);
    return LinkConfig{"custom", rtt_ms / 1000.0, up, down, {}, {}};
  }
  throw ConfigError("unknown network: " + flag);
}

double schedule_delivery(const LinkConfig& cfg, Direction dir, std::size_t frame_len,
                         double enqueue_time, double& free_time) {
  double bw = dir == Direction::kUp ? cfg.up_bandwidth : cfg.down_bandwidth;
  double start = std::max(enqueue_time, free_time);
  double serialize = static_cast<double>(frame_len) / bw;
  free_time = start + serialize;
  return start + cfg.rtt / 2.0 + serialize;
}

// --- VirtualWorld -----------------------------------------------------------

struct Actor {
  uint64_t seq = 0;
  double wake_at = 0.0;
  const void* key = nullptr;
  bool running = false;
  std::condition_variable cv;
};

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
thread_local Actor* tl_actor = nullptr;
}  // namespace

VirtualWorld::VirtualWorld() = default;

VirtualWorld::~VirtualWorld() = default;

double VirtualWorld::now() const {
  std::lock_guard lk(mu_);
  return now_;
}

void VirtualWorld::charge(double seconds) {
  if (seconds < 0) seconds = 0;
  std::unique_lock wl(mu_);
  park_until_locked(wl, now_ + seconds, nullptr);
}

Actor* VirtualWorld::register_actor_locked() {
  Actor* a = new Actor;
  a->seq = next_seq_++;
  a->wake_at = now_;
  actors_.push_back(a);
  bool someone_running = std::any_of(actors_.begin(), actors_.end(),
                                     [](Actor* x) { return x->running; });
  if (!someone_running) schedule_next_locked();
  return a;
}

void VirtualWorld::unregister_actor(Actor* a) {
  {
    std::unique_lock wl(mu_);
    actors_.erase(std::find(actors_.begin(), actors_.end(), a));
    if (a->running) schedule_next_locked();
  }
  if (tl_actor == a) tl_actor = nullptr;
  delete a;
}

void VirtualWorld::schedule_next_locked() {
  Actor* best = nullptr;
  for (Actor* a : actors_) {
    if (a->running) return;  // someone already runs; nothing to do
    if (!best || a->wake_at < best->wake_at ||
        (a->wake_at == best->wake_at && a->seq < best->seq))
      best = a;
  }
  if (!best) return;
  if (best->wake_at == kInf)
    throw std::logic_error("virtual world deadlock: every actor parked forever");
  if (best->wake_at > now_) now_ = best->wake_at;
  best->running = true;
  best->cv.notify_one();
}

void VirtualWorld::park_until_locked(std::unique_lock<std::mutex>& wl, double wake_at,
                                     const void* key) {
  Actor* me = tl_actor;
  if (!me || !me->running)
    throw std::logic_error("park_until called off the running actor");
  me->running = false;
  me->wake_at = std::max(wake_at, now_);
  me->key = key;
  schedule_next_locked();
  me->cv.wait(wl, [me] { return me->running; });
  me->key = nullptr;
}

void VirtualWorld::poke_locked(const void* key, double at_time) {
  bool someone_running = false;
  for (Actor* a : actors_) {
    if (a->running) someone_running = true;
    if (!a->running && a->key == key)
      a->wake_at = std::min(a->wake_at, std::max(at_time, now_));
  }
  if (!someone_running) schedule_next_locked();
}

VirtualWorld::Scope::Scope(VirtualWorld& w) : w_(w) {
  std::unique_lock wl(w_.mu_);
  a_ = w_.register_actor_locked();
  tl_actor = a_;
  a_->cv.wait(wl, [this] { return a_->running; });
}

VirtualWorld::Scope::~Scope() { w_.unregister_actor(a_); }

void VirtualWorld::run_actor(Actor* a, std::function<void()> fn) {
  {
    std::unique_lock wl(mu_);
    tl_actor = a;
    a->cv.wait(wl, [a] { return a->running; });
  }
  fn();
  unregister_actor(a);
}

std::thread VirtualWorld::spawn(std::function<void()> fn) {
  Actor* a;
  {
    std::lock_guard lk(mu_);
    a = register_actor_locked();
  }
  return std::thread([this, a, fn = std::move(fn)]() mutable { run_actor(a, std::move(fn)); });
}

namespace {

class VirtualCondVar : public CondVar {
 public:
  explicit VirtualCondVar(VirtualWorld& w) : w_(w) {}

  bool wait_until(std::unique_lock<std::mutex>& lk, double deadline) override {
    lk.unlock();
    bool expired;
    {
      std::unique_lock wl(w_.mu());
      if (w_.now_locked() >= deadline) {
        lk.lock();
        return false;
      }
      w_.park_until_locked(wl, deadline, this);
      expired = w_.now_locked() >= deadline;
    }
    lk.lock();
    return !expired;
  }

  void notify_all() override {
    std::lock_guard wl(w_.mu());
    w_.poke_locked(this, w_.now_locked());
  }

 private:
  VirtualWorld& w_;
};

}  // namespace

std::unique_ptr<CondVar> VirtualWorld::make_condvar() {
  return std::make_unique<VirtualCondVar>(*this);
}

// --- shared link state ------------------------------------------------------

namespace {

struct TimedFrame {
  double delivery = 0.0;
  std::vector<uint8_t> bytes;
};

// Per-link mutable state; the owning link's mutex (world mutex for virtual
// links) guards it.
struct LinkState {
  LinkConfig cfg;
  LinkCounters counters;
  double free_time[2] = {0.0, 0.0};
  std::deque<TimedFrame> queue[2];
  bool closed = false;

  bool blackholed(double now) const {
    if (cfg.blackhole_after_time && now >= *cfg.blackhole_after_time) return true;
    if (cfg.blackhole_after_bytes &&
        counters.offered_up + counters.offered_down > *cfg.blackhole_after_bytes)
      return true;
    return false;
  }

  // Returns the delivery time, or nullopt if the frame was dropped.
  std::optional<double> push(Direction dir, std::vector<uint8_t> frame, double now) {
    int d = dir == Direction::kUp ? 0 : 1;
    uint64_t len = frame.size();
    (dir == Direction::kUp ? counters.offered_up : counters.offered_down) += len;
    if (closed || blackholed(now)) return std::nullopt;
    double delivery = schedule_delivery(cfg, dir, frame.size(), now, free_time[d]);
    queue[d].push_back(TimedFrame{delivery, std::move(frame)});
    return delivery;
  }

  // Pops the head frame if it has been delivered by `now`.
  bool pop_ready(Direction dir, double now, std::vector<uint8_t>& out) {
    int d = dir == Direction::kUp ? 0 : 1;
    if (queue[d].empty() || queue[d].front().delivery > now) return false;
    out = std::move(queue[d].front().bytes);
    queue[d].pop_front();
    (dir == Direction::kUp ? counters.delivered_up : counters.delivered_down) += out.size();
    return true;
  }

  double head_delivery(Direction dir) const {
    int d = dir == Direction::kUp ? 0 : 1;
    return queue[d].empty() ? kInf : queue[d].front().delivery;
  }
};

}  // namespace

// --- VirtualLink ------------------------------------------------------------

struct VirtualLink::Impl {
  VirtualWorld& world;
  LinkState state;

  class End : public FrameTransport {
   public:
    End(Impl& link, Direction tx) : link_(link), tx_(tx) {}

    void send(std::vector<uint8_t> frame) override {
      std::lock_guard wl(link_.world.mu());
      double now = link_.world.now_locked();
      auto delivery = link_.state.push(tx_, std::move(frame), now);
      if (delivery) link_.world.poke_locked(rx_key(), *delivery);
    }

    RecvStatus recv(double timeout_s, std::vector<uint8_t>& out) override {
      Direction rx = tx_ == Direction::kUp ? Direction::kDown : Direction::kUp;
      std::unique_lock wl(link_.world.mu());
      double deadline = link_.world.now_locked() + std::max(timeout_s, 0.0);
      for (;;) {
        if (link_.state.pop_ready(rx, link_.world.now_locked(), out)) return RecvStatus::kOk;
        if (link_.state.closed) return RecvStatus::kClosed;
        double head = link_.state.head_delivery(rx);
        if (link_.world.now_locked() >= deadline && head > deadline)
          return RecvStatus::kTimeout;
        link_.world.park_until_locked(wl, std::min(deadline, head), rx_key());
      }
    }

    uint64_t bytes_sent() const override {
      std::lock_guard wl(link_.world.mu());
      return tx_ == Direction::kUp ? link_.state.counters.offered_up
                                   : link_.state.counters.offered_down;
    }

    uint64_t bytes_received() const override {
      std::lock_guard wl(link_.world.mu());
      return tx_ == Direction::kUp ? link_.state.counters.delivered_down
                                   : link_.state.counters.delivered_up;
    }

    void close() override {
      std::lock_guard wl(link_.world.mu());
      link_.state.closed = true;
      link_.world.poke_locked(&link_.state.queue[0], link_.world.now_locked());
      link_.world.poke_locked(&link_.state.queue[1], link_.world.now_locked());
    }

   private:
    // Wait key of the direction this end receives from.
    const void* rx_key() const {
      return tx_ == Direction::kUp ? static_cast<const void*>(&link_.state.queue[1])
                                   : static_cast<const void*>(&link_.state.queue[0]);
    }

    Impl& link_;
    Direction tx_;
  };

  End client{*this, Direction::kUp};
  End server{*this, Direction::kDown};

  Impl(VirtualWorld& w, LinkConfig cfg) : world(w) { state.cfg = std::move(cfg); }
};

VirtualLink::VirtualLink(VirtualWorld& world, LinkConfig cfg)
    : impl_(std::make_unique<Impl>(world, std::move(cfg))) {}

VirtualLink::~VirtualLink() = default;

FrameTransport& VirtualLink::client_end() { return impl_->client; }
FrameTransport& VirtualLink::server_end() { return impl_->server; }

LinkCounters VirtualLink::counters() const {
  std::lock_guard wl(impl_->world.mu());
  return impl_->state.counters;
}

void VirtualLink::close() { impl_->client.close(); }

// --- RealLink ---------------------------------------------------------------

struct RealLink::Impl {
  RealClock& clock;
  std::mutex mu;
  std::condition_variable cv;
  LinkState state;

  class End : public FrameTransport {
   public:
    End(Impl& link, Direction tx) : link_(link), tx_(tx) {}

    void send(std::vector<uint8_t> frame) override {
      std::lock_guard lk(link_.mu);
      link_.state.push(tx_, std::move(frame), link_.clock.now());
      link_.cv.notify_all();
    }

    RecvStatus recv(double timeout_s, std::vector<uint8_t>& out) override {
      Direction rx = tx_ == Direction::kUp ? Direction::kDown : Direction::kUp;
      std::unique_lock lk(link_.mu);
      double deadline = link_.clock.now() + std::max(timeout_s, 0.0);
      for (;;) {
        double now = link_.clock.now();
        if (link_.state.pop_ready(rx, now, out)) return RecvStatus::kOk;
        if (link_.state.closed) return RecvStatus::kClosed;
        double head = link_.state.head_delivery(rx);
        if (now >= deadline && head > deadline) return RecvStatus::kTimeout;
        double until = std::min(deadline, head);
        link_.cv.wait_for(lk, std::chrono::duration<double>(
                                  std::max(1e-4, until - now)));
      }
    }

    uint64_t bytes_sent() const override {
      std::lock_guard lk(link_.mu);
      return tx_ == Direction::kUp ? link_.state.counters.offered_up
                                   : link_.state.counters.offered_down;
    }

    uint64_t bytes_received() const override {
      std::lock_guard lk(link_.mu);
      return tx_ == Direction::kUp ? link_.state.counters.delivered_down
                                   : link_.state.counters.delivered_up;
    }

    void close() override {
      std::lock_guard lk(link_.mu);
      link_.state.closed = true;
      link_.cv.notify_all();
    }

   private:
    Impl& link_;
    Direction tx_;
  };

  End client{*this, Direction::kUp};
  End server{*this, Direction::kDown};

  Impl(RealClock& c, LinkConfig cfg) : clock(c) { state.cfg = std::move(cfg); }
};

RealLink::RealLink(RealClock& clock, LinkConfig cfg)
    : impl_(std::make_unique<Impl>(clock, std::move(cfg))) {}

RealLink::~RealLink() = default;

FrameTransport& RealLink::client_end() { return impl_->client; }
FrameTransport& RealLink::server_end() { return impl_->server; }

LinkCounters RealLink::counters() const {
  std::lock_guard lk(impl_->mu);
  return impl_->state.counters;
}

void RealLink::close() { impl_->client.close(); }

}  // namespace offgrid
