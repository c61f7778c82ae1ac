#include "offgrid/client.hpp"

#include <algorithm>
#include <unordered_set>

#include "offgrid/errors.hpp"
#include "offgrid/wire.hpp"

namespace offgrid {

// --- decision engine ---------------------------------------------------------

namespace {

double upload_bytes(const StateSizing& s, Strategy strategy) {
  double proxies = static_cast<double>(kProxyNodeBytes) * s.n_proxies;
  switch (strategy) {
    case Strategy::kEager:
      return static_cast<double>(s.state_size);
    case Strategy::kLazy:
    case Strategy::kPipelined:
      return static_cast<double>(s.state_size) - static_cast<double>(s.elidable_size) +
             proxies;
  }
  return static_cast<double>(s.state_size);
}

}  // namespace

double estimate_remote_seconds(const StateSizing& s, const NetworkProfile& p,
                               const DecisionConstants& c, Strategy strategy) {
  // A forced offload may run against an unmeasured profile; fall back to the
  // bare timeout rather than an unbounded deadline.
  if (!(p.uplink > 0) || !(p.downlink > 0)) return 0.0;
  double compute = s.compute_hint / c.server_speed;
  double down = c.result_bytes_estimate / p.downlink;
  if (strategy == Strategy::kPipelined) {
    double first_chunk = upload_bytes(s, Strategy::kPipelined);
    double remaining = static_cast<double>(s.elidable_size);
    return p.rtt + first_chunk / p.uplink + std::max(remaining / p.uplink, compute) + down;
  }
  return p.rtt + upload_bytes(s, strategy) / p.uplink + compute + down;
}

Placement decide(const StateSizing& sizing, const NetworkProfile& profile,
                 const DecisionConstants& constants, bool offloadable) {
  if (!profile.reachable || !offloadable || profile.uplink <= 0 || profile.downlink <= 0)
    return Placement::local();
  double t_local = sizing.compute_hint / constants.local_speed;
  // Tie preference on exact equality: Local, then Eager, Pipelined, Lazy.
  Strategy best = Strategy::kEager;
  double best_t = estimate_remote_seconds(sizing, profile, constants, Strategy::kEager);
  for (Strategy s : {Strategy::kPipelined, Strategy::kLazy}) {
    double t = estimate_remote_seconds(sizing, profile, constants, s);
    if (t < best_t) {
      best = s;
      best_t = t;
    }
  }
  if (best_t < t_local) return Placement::remote(best);
  return Placement::local();
}

bool should_elide(const ObjectNode& node, const ClientCacheView& cache) {
  if (!node.proxyable) return false;
  auto it = cache.entries.find(node.guid);
  return it != cache.entries.end() && it->second == content_hash(node);
}

// --- Client ------------------------------------------------------------------

Client::Client(FrameTransport& transport, Clock& clock, std::vector<uint8_t> code_bundle,
               ClientOptions opts)
    : transport_(transport),
      clock_(clock),
      opts_(std::move(opts)),
      bundle_(std::move(code_bundle)),
      code_hash_(md5(bundle_)) {}

void Client::register_task(TaskDescriptor d) { tasks_.register_task(std::move(d)); }

namespace {

// Receives frames until one matches `want`, ignoring stragglers of other
// kinds. Returns nullopt on timeout or close.
std::optional<wire::Message> recv_kind(FrameTransport& t, Clock& clock, wire::Kind want,
                                       double timeout_s) {
  double deadline = clock.now() + timeout_s;
  std::vector<uint8_t> frame;
  for (;;) {
    double left = deadline - clock.now();
    if (left < 0) return std::nullopt;
    RecvStatus st = t.recv(left, frame);
    if (st != RecvStatus::kOk) return std::nullopt;
    wire::Message m;
    try {
      m = wire::decode(frame);
    } catch (const ProtocolError&) {
      return std::nullopt;
    }
    if (wire::kind_of(m) == want) return m;
    if (std::holds_alternative<wire::RemoteError>(m)) return m;
  }
}

}  // namespace

bool Client::ensure_code_registered() {
  if (code_registered_) return true;
  transport_.send(wire::encode(wire::CodeCheck{code_hash_}));
  double deadline = clock_.now() + opts_.timeout_s;
  std::vector<uint8_t> frame;
  for (;;) {
    double left = deadline - clock_.now();
    if (left <= 0) return false;
    if (transport_.recv(left, frame) != RecvStatus::kOk) return false;
    wire::Message msg;
    try {
      msg = wire::decode(frame);
    } catch (const ProtocolError&) {
      return false;
    }
    if (std::holds_alternative<wire::CodeOk>(msg)) {
      code_registered_ = true;
      return true;
    }
    if (std::holds_alternative<wire::CodeNeed>(msg)) {
      transport_.send(wire::encode(wire::CodeUpload{code_hash_, bundle_}));
      deadline = clock_.now() + opts_.timeout_s;
    } else if (std::holds_alternative<wire::RemoteError>(msg)) {
      return false;
    }
    // Stray frames of other kinds are skipped.
  }
}

NetworkProfile Client::profile_network() {
  NetworkProfile measured;
  measured.reachable = true;
  double probe_timeout = opts_.timeout_s;

  std::vector<double> rtts;
  for (int i = 0; i < 3 && measured.reachable; ++i) {
    double t0 = clock_.now();
    transport_.send(wire::encode(wire::Ping{}));
    auto pong = recv_kind(transport_, clock_, wire::Kind::kPong, probe_timeout);
    if (!pong || !std::holds_alternative<wire::Pong>(*pong))
      measured.reachable = false;
    else
      rtts.push_back(clock_.now() - t0);
  }
  if (measured.reachable) {
    std::sort(rtts.begin(), rtts.end());
    measured.rtt = rtts[1];

    double t0 = clock_.now();
    transport_.send(wire::encode(wire::Probe{std::vector<uint8_t>(wire::kProbeBytes, 0)}));
    auto ack = recv_kind(transport_, clock_, wire::Kind::kPong, probe_timeout);
    if (!ack || !std::holds_alternative<wire::Pong>(*ack)) {
      measured.reachable = false;
    } else {
      double elapsed = clock_.now() - t0;
      measured.uplink = wire::kProbeBytes / std::max(elapsed - measured.rtt, 1e-9);
    }
  }
  if (measured.reachable) {
    double t0 = clock_.now();
    transport_.send(wire::encode(wire::Probe{}));
    auto back = recv_kind(transport_, clock_, wire::Kind::kProbe, probe_timeout);
    if (!back || !std::holds_alternative<wire::Probe>(*back)) {
      measured.reachable = false;
    } else {
      double elapsed = clock_.now() - t0;
      measured.downlink = wire::kProbeBytes / std::max(elapsed - measured.rtt, 1e-9);
    }
  }

  if (!measured.reachable) {
    profile_.reachable = false;
    profile_.last_updated = clock_.now();
    return profile_;
  }
  // EWMA over the prior profile when one exists.
  if (profile_.last_updated > 0 && profile_.uplink > 0) {
    measured.rtt = 0.5 * measured.rtt + 0.5 * profile_.rtt;
    measured.uplink = 0.5 * measured.uplink + 0.5 * profile_.uplink;
    measured.downlink = 0.5 * measured.downlink + 0.5 * profile_.downlink;
  }
  measured.last_updated = clock_.now();
  profile_ = measured;
  return profile_;
}

std::vector<Guid> Client::gather_roots(const ObjectGraph& graph, const Guid& target,
                                       std::span<const Guid> params) const {
  std::vector<Guid> roots;
  std::unordered_set<Guid, GuidHash> seen;
  auto add = [&](const Guid& g) {
    if (seen.insert(g).second) roots.push_back(g);
  };
  add(target);
  for (const Guid& g : params) add(g);
  for (const std::string& name : opts_.static_roots) {
    auto it = graph.statics.find(name);
    if (it == graph.statics.end())
      throw UnknownObjectError("configured static root not in graph: " + name);
    add(it->second);
  }
  return roots;
}

StateSizing Client::measure(const ObjectGraph& graph, std::span<const Guid> roots,
                            const TaskDescriptor& task, const Guid& target,
                            std::span<const Guid> params) const {
  StateSizing sizing;
  sizing.state_size = 8;  // stream magic + count
  for (const Guid& g : reachable_closure(graph, roots)) {
    const ObjectNode& n = graph.at(g);
    std::size_t full = encoded_node_size(n);
    if (opts_.cache_enabled && should_elide(n, cache_)) {
      sizing.state_size += kProxyNodeBytes;
    } else {
      sizing.state_size += full;
      if (n.proxyable) {
        sizing.elidable_size += full;
        sizing.n_proxies++;
      }
    }
  }
  if (task.compute_hint) sizing.compute_hint = task.compute_hint(graph, target, params);
  return sizing;
}

InvokeResult Client::run_local(const TaskDescriptor& task, ObjectGraph& graph,
                               const Guid& target, std::span<const Guid> params,
                               Placement placement) {
  class LocalContext : public TaskContext {
   public:
    LocalContext(ObjectGraph& g, Clock& c, double speed) : g_(g), c_(c), speed_(speed) {}
    ObjectNode& access(const Guid& g) override { return g_.at(g); }
    ObjectNode& create(ObjectNode node) override { return g_.insert(std::move(node)); }
    void charge(double units) override { c_.charge(units / speed_); }

   private:
    ObjectGraph& g_;
    Clock& c_;
    double speed_;
  };

  double t0 = clock_.now();
  LocalContext ctx(graph, clock_, opts_.decision.local_speed);
  TaskResult r = task.impl(ctx, target, params);
  InvokeResult out;
  out.return_payload = std::move(r.return_payload);
  out.metrics.placement = placement;
  out.metrics.wall_time = clock_.now() - t0;
  return out;
}

InvokeResult Client::invoke(uint32_t task_id, ObjectGraph& graph, const Guid& target,
                            std::span<const Guid> params) {
  const TaskDescriptor& task = tasks_.at(task_id);
  std::vector<Guid> roots = gather_roots(graph, target, params);
  StateSizing sizing = measure(graph, roots, task, target, params);

  Placement placement;
  switch (opts_.placement) {
    case PlacementOverride::kAuto:
      placement = decide(sizing, profile_, opts_.decision, task.offloadable);
      break;
    case PlacementOverride::kLocal:
      placement = Placement::local();
      break;
    case PlacementOverride::kEager:
      placement = Placement::remote(Strategy::kEager);
      break;
    case PlacementOverride::kLazy:
      placement = Placement::remote(Strategy::kLazy);
      break;
    case PlacementOverride::kPipelined:
      placement = Placement::remote(Strategy::kPipelined);
      break;
  }
  if (placement.is_remote() && !task.offloadable) placement = Placement::local();

  if (!placement.is_remote()) return run_local(task, graph, target, params, placement);

  try {
    if (!ensure_code_registered()) throw RemoteFailure("code registration failed");
    return offload(task, placement.strategy, graph, target, params, roots, sizing);
  } catch (const RemoteFailure&) {
    // Partial server work is invisible; rerun locally on the unmodified graph.
    profile_.reachable = false;
    Placement fb = Placement::local();
    fb.fell_back = true;
    return run_local(task, graph, target, params, fb);
  }
}

InvokeResult Client::offload(const TaskDescriptor& task, Strategy strategy,
                             ObjectGraph& graph, const Guid& target,
                             std::span<const Guid> params, std::span<const Guid> roots,
                             const StateSizing& sizing) {
  double t0 = clock_.now();
  ProxyPolicy policy{strategy, opts_.cache_enabled};
  SerializedGraph ser = serialize_graph(graph, roots, policy, &cache_);
  std::vector<Guid> closure = reachable_closure(graph, roots);

  uint64_t up_base = transport_.bytes_sent();
  uint64_t down_base = transport_.bytes_received();

  wire::Execute ex;
  ex.task_id = task.task_id;
  ex.alt_impl_id = task.alternative_impl_id.value_or(wire::kNoAlternative);
  ex.strategy = strategy;
  ex.code_hash = code_hash_;
  ex.target_root = target;
  ex.param_roots.assign(params.begin(), params.end());
  for (const Guid& g : roots)
    if (g != target && std::find(params.begin(), params.end(), g) == params.end())
      ex.static_roots.push_back(g);
  ex.state = ser.bytes;
  transport_.send(wire::encode(ex));

  // Pipelined: stream every strategy-elided object, hint order first. Each
  // node is serialized only after the previous frame was handed to the link.
  std::unordered_set<Guid, GuidHash> pushed;
  if (strategy == Strategy::kPipelined && !ser.strategy_elided.empty()) {
    std::vector<Guid> plan;
    std::unordered_set<Guid, GuidHash> elided(ser.strategy_elided.begin(),
                                              ser.strategy_elided.end());
    if (task.access_order_hint) {
      for (const Guid& g : task.access_order_hint(graph, target, params)) {
        if (elided.count(g) && !pushed.count(g)) {
          plan.push_back(g);
          pushed.insert(g);
        }
      }
    }
    for (const Guid& g : ser.strategy_elided)
      if (!pushed.count(g)) {
        plan.push_back(g);
        pushed.insert(g);
      }
    for (const Guid& g : plan)
      transport_.send(wire::encode(wire::ObjectPush{g, encode_node_stream(graph.at(g))}));
  }

  TransferMetrics metrics;
  metrics.placement = Placement::remote(strategy);
  metrics.cache_hits = static_cast<uint32_t>(ser.cache_elided.size());

  double deadline = t0 + opts_.timeout_s +
                    estimate_remote_seconds(sizing, profile_, opts_.decision, strategy);
  std::vector<uint8_t> frame;
  for (;;) {
    double left = deadline - clock_.now();
    if (left <= 0) throw RemoteFailure("offload timed out");
    RecvStatus st = transport_.recv(left, frame);
    if (st == RecvStatus::kTimeout) throw RemoteFailure("offload timed out");
    if (st == RecvStatus::kClosed) throw RemoteFailure("connection closed");

    wire::Message msg;
    try {
      msg = wire::decode(frame);
    } catch (const ProtocolError& e) {
      throw RemoteFailure(std::string("garbled server frame: ") + e.what());
    }

    if (auto* fetch = std::get_if<wire::ObjectFetch>(&msg)) {
      if (pushed.count(fetch->guid)) continue;  // already in flight on the wire
      const ObjectNode* node = graph.find(fetch->guid);
      if (!node) throw RemoteFailure("server fetched unknown object " + fetch->guid.hex());
      metrics.fetch_round_trips++;
      transport_.send(
          wire::encode(wire::ObjectPush{fetch->guid, encode_node_stream(*node)}));
    } else if (auto* err = std::get_if<wire::RemoteError>(&msg)) {
      if (err->code == wire::ErrorCode::kCodeUnknown) code_registered_ = false;
      if (err->code == wire::ErrorCode::kCacheMiss) {
        // Server lost our acknowledged copies; drop the elided digests so the
        // retry sends full state.
        for (const Guid& g : ser.cache_elided) cache_.entries.erase(g);
      }
      throw RemoteFailure("remote error: " + err->message);
    } else if (auto* result = std::get_if<wire::Result>(&msg)) {
      if (result->status != 0) throw RemoteFailure("remote execution failed");
      apply_result_state(graph, result->modified_state);
      if (opts_.cache_enabled) {
        // The server now holds full post-execution copies of everything we
        // sent in full plus everything it returned; acknowledge those.
        std::unordered_set<Guid, GuidHash> elided(ser.elided.begin(), ser.elided.end());
        auto acknowledge = [&](const Guid& g) {
          const ObjectNode* n = graph.find(g);
          if (n && n->proxyable && !n->is_proxy())
            cache_.entries[g] = content_hash(*n);
        };
        for (const Guid& g : closure)
          if (!elided.count(g)) acknowledge(g);
        ObjectGraph returned = deserialize_graph(result->modified_state);
        for (const auto& n : returned.nodes()) acknowledge(n->guid);
      }
      metrics.bytes_up = transport_.bytes_sent() - up_base;
      metrics.bytes_down = transport_.bytes_received() - down_base;
      metrics.wall_time = clock_.now() - t0;
      InvokeResult out;
      out.return_payload = std::move(result->return_payload);
      out.metrics = metrics;
      return out;
    }
    // Anything else (stray Pong/Probe from profiling) is ignored.
  }
}

}  // namespace offgrid
