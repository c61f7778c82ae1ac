#include "offgrid/server.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_set>

#include "offgrid/bytes.hpp"
#include "offgrid/errors.hpp"

namespace offgrid {

// --- CodeRegistry -----------------------------------------------------------

CodeRegistry::CodeRegistry(std::optional<std::filesystem::path> dir) : dir_(std::move(dir)) {
  if (dir_) std::filesystem::create_directories(*dir_);
}

std::filesystem::path CodeRegistry::path_for(const Md5Digest& hash) const {
  return *dir_ / (to_hex(hash) + ".bundle");
}

bool CodeRegistry::contains(const Md5Digest& hash) const {
  if (bundles_.count(to_hex(hash))) return true;
  return dir_ && std::filesystem::exists(path_for(hash));
}

void CodeRegistry::put(const Md5Digest& hash, std::vector<uint8_t> bundle) {
  std::string key = to_hex(hash);
  if (bundles_.count(key)) return;  // a hash is never remapped
  if (dir_) {
    std::ofstream out(path_for(hash), std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bundle.data()),
              static_cast<std::streamsize>(bundle.size()));
  }
  bundles_.emplace(std::move(key), std::move(bundle));
}

const std::vector<uint8_t>* CodeRegistry::get(const Md5Digest& hash) const {
  std::string key = to_hex(hash);
  auto it = bundles_.find(key);
  if (it != bundles_.end()) return &it->second;
  if (dir_ && std::filesystem::exists(path_for(hash))) {
    std::ifstream in(path_for(hash), std::ios::binary);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    auto [pos, _] = bundles_.emplace(key, std::move(bytes));
    return &pos->second;
  }
  return nullptr;
}

// --- ServerCache ------------------------------------------------------------

const ServerCache::Entry* ServerCache::get(const Guid& g) const {
  auto it = entries_.find(g);
  return it == entries_.end() ? nullptr : &it->second;
}

void ServerCache::put(const Guid& g, Entry e) { entries_[g] = std::move(e); }

// --- Server -----------------------------------------------------------------

namespace {

// Thrown inside the executor when the ingest side already reported the
// session dead; no further REMOTE_ERROR goes out.
struct ExecAborted {};

struct FaultTimeout {};

}  // namespace

struct Server::Session {
  std::mutex mu;
  std::unique_ptr<CondVar> cv;

  ObjectGraph graph;
  std::unordered_map<Guid, Md5Digest, GuidHash> pre_hashes;
  // Arrival order of the state stream; the modified-state return follows it.
  std::vector<Guid> arrival_order;
  std::unordered_set<Guid, GuidHash> expected_pushes;  // pipelined plan
  std::unordered_set<Guid, GuidHash> fetched;

  wire::Execute request;
  uint64_t bytes_base = 0;  // transport rx counter just before the EXECUTE frame

  bool done = false;
  bool aborted = false;
  bool abort_reported = false;

  SessionStats stats;
};

struct Server::Connection {
  FrameTransport& transport;
  Clock& clock;
  std::shared_ptr<Session> session;  // most recent; null before first EXECUTE
  std::thread executor;
};

Server::Server(BundleResolver resolver, ServerOptions opts)
    : resolver_(std::move(resolver)), opts_(std::move(opts)), code_(opts_.registry_dir) {}

Server::~Server() = default;

Server::SessionStats Server::last_session_stats() const {
  std::lock_guard lk(stats_mu_);
  return last_stats_;
}

void Server::save_stats(const Session& s) {
  std::lock_guard lk(stats_mu_);
  last_stats_ = s.stats;
}

void Server::serve_connection(FrameTransport& transport, Clock& clock) {
  Connection conn{transport, clock, nullptr, {}};
  for (;;) {
    std::vector<uint8_t> frame;
    RecvStatus st = transport.recv(3600.0, frame);
    if (st == RecvStatus::kClosed) break;
    if (st == RecvStatus::kTimeout) continue;
    handle_frame(conn, std::move(frame));
  }
  // Peer gone: unblock a still-running executor so it can abort.
  if (conn.session) {
    std::unique_lock lk(conn.session->mu);
    if (!conn.session->done) {
      conn.session->aborted = true;
      conn.session->abort_reported = true;  // nobody left to report to
      conn.session->cv->notify_all();
    }
  }
  if (conn.executor.joinable()) conn.executor.join();
}

void Server::handle_frame(Connection& conn, std::vector<uint8_t> frame) {
  uint64_t frame_len = frame.size();
  wire::Message msg;
  try {
    msg = wire::decode(frame);
  } catch (const ProtocolError& e) {
    // A session aborts wholesale on any protocol error; partial results are
    // never returned.
    if (conn.session) {
      std::unique_lock lk(conn.session->mu);
      if (!conn.session->done)
        abort_session(conn, *conn.session, wire::ErrorCode::kProtocol, e.what());
    }
    conn.transport.send(wire::encode(wire::RemoteError{wire::ErrorCode::kProtocol, e.what()}));
    return;
  }

  if (std::get_if<wire::Ping>(&msg)) {
    conn.transport.send(wire::encode(wire::Pong{}));
  } else if (auto* probe = std::get_if<wire::Probe>(&msg)) {
    if (probe->filler.empty()) {
      conn.transport.send(
          wire::encode(wire::Probe{std::vector<uint8_t>(wire::kProbeBytes, 0)}));
    } else {
      conn.transport.send(wire::encode(wire::Pong{}));
    }
  } else if (auto* check = std::get_if<wire::CodeCheck>(&msg)) {
    if (code_.contains(check->hash))
      conn.transport.send(wire::encode(wire::CodeOk{check->hash}));
    else
      conn.transport.send(wire::encode(wire::CodeNeed{check->hash}));
  } else if (auto* upload = std::get_if<wire::CodeUpload>(&msg)) {
    if (md5(upload->bundle) != upload->hash) {
      conn.transport.send(wire::encode(
          wire::RemoteError{wire::ErrorCode::kHashMismatch, "bundle hash mismatch"}));
    } else {
      code_.put(upload->hash, std::move(upload->bundle));
      conn.transport.send(wire::encode(wire::CodeOk{upload->hash}));
    }
  } else if (auto* exec = std::get_if<wire::Execute>(&msg)) {
    start_execute(conn, std::move(*exec), frame_len);
  } else if (auto* push = std::get_if<wire::ObjectPush>(&msg)) {
    handle_object_push(conn, *push);
  } else {
    // Client-bound kinds arriving at the server: protocol misuse.
    conn.transport.send(wire::encode(
        wire::RemoteError{wire::ErrorCode::kProtocol, "unexpected message kind"}));
  }
}

void Server::start_execute(Connection& conn, wire::Execute msg, uint64_t frame_len) {
  if (conn.session) {
    std::unique_lock lk(conn.session->mu);
    if (!conn.session->done) {
      lk.unlock();
      conn.transport.send(wire::encode(wire::RemoteError{
          wire::ErrorCode::kProtocol, "execution already in flight"}));
      return;
    }
  }
  if (conn.executor.joinable()) conn.executor.join();

  auto s = std::make_shared<Session>();
  s->cv = conn.clock.make_condvar();
  s->request = std::move(msg);
  s->bytes_base = conn.transport.bytes_received() - frame_len;
  conn.session = s;
  conn.executor = conn.clock.spawn([this, &conn, s] { run_execute(conn, s); });
}

void Server::abort_session(Connection& conn, Session& s, wire::ErrorCode code,
                           const std::string& msg) {
  // Caller holds the session lock.
  s.aborted = true;
  s.done = true;
  if (!s.abort_reported) {
    s.abort_reported = true;
    conn.transport.send(wire::encode(wire::RemoteError{code, msg}));
  }
  s.cv->notify_all();
  save_stats(s);
}

void Server::handle_object_push(Connection& conn, const wire::ObjectPush& push) {
  std::shared_ptr<Session> s = conn.session;
  if (!s) return;  // no session ever started; stray push
  std::unique_lock lk(s->mu);
  s->stats.pushes_received++;
  if (s->done) {
    save_stats(*s);  // late push after RESULT: session closed, discard
    return;
  }
  ObjectNode* node = s->graph.find(push.guid);
  if (!node) {
    abort_session(conn, *s, wire::ErrorCode::kProtocol,
                  "push for guid not in session graph: " + push.guid.hex());
    return;
  }
  if (!node->is_proxy()) {
    // First writer already hydrated this object; duplicate discarded.
    s->stats.duplicate_pushes++;
    save_stats(*s);
    return;
  }
  try {
    std::vector<Guid> materialized = hydrate_proxy(s->graph, push.guid, push.node_bytes);
    for (const Guid& g : materialized) {
      s->pre_hashes[g] = content_hash(s->graph.at(g));
      if (std::find(s->arrival_order.begin(), s->arrival_order.end(), g) ==
          s->arrival_order.end())
        s->arrival_order.push_back(g);
    }
  } catch (const Error& e) {
    abort_session(conn, *s, wire::ErrorCode::kProtocol, e.what());
    return;
  }
  s->expected_pushes.erase(push.guid);
  s->stats.hydrations++;
  save_stats(*s);
  s->cv->notify_all();
}

namespace {

// Faulting accessor the task runs against. Touching a proxy parks the
// executor on the session condition until a push or fetch reply hydrates it.
class ServerTaskContext : public TaskContext {
 public:
  ServerTaskContext(Server::Session& s, FrameTransport& transport, Clock& clock,
                    const ServerOptions& opts, Server::SessionStats& stats)
      : s_(s), transport_(transport), clock_(clock), opts_(opts), stats_(stats) {}

  ObjectNode& access(const Guid& g) override {
    std::unique_lock lk(s_.mu);
    ObjectNode* node = s_.graph.find(g);
    if (!node) throw UnknownObjectError("task touched unknown object: " + g.hex());
    while (node->is_proxy()) {
      if (s_.aborted) throw ExecAborted{};
      // A pipelined client pushes every strategy-elided object unprompted;
      // fetch only when no push is expected for this guid.
      if (!s_.expected_pushes.count(g) && !s_.fetched.count(g)) {
        s_.fetched.insert(g);
        stats_.fetches_sent++;
        transport_.send(wire::encode(wire::ObjectFetch{g}));
      }
      if (!s_.cv->wait_until(lk, clock_.now() + opts_.fault_timeout_s))
        throw FaultTimeout{};
    }
    return *node;
  }

  ObjectNode& create(ObjectNode node) override {
    std::unique_lock lk(s_.mu);
    ObjectNode& ref = s_.graph.insert(std::move(node));
    s_.arrival_order.push_back(ref.guid);  // new node: no pre-hash on purpose
    return ref;
  }

  void charge(double units) override { clock_.charge(units / opts_.server_speed); }

 private:
  Server::Session& s_;
  FrameTransport& transport_;
  Clock& clock_;
  const ServerOptions& opts_;
  Server::SessionStats& stats_;
};

}  // namespace

void Server::run_execute(Connection& conn, std::shared_ptr<Session> sp) {
  Session& s = *sp;
  FrameTransport& transport = conn.transport;
  Clock& clock = conn.clock;
  const wire::Execute& req = s.request;

  auto fail = [&](wire::ErrorCode code, const std::string& msg) {
    std::unique_lock lk(s.mu);
    abort_session(conn, s, code, msg);
  };

  // Code and task resolution.
  const std::vector<uint8_t>* bundle = code_.get(req.code_hash);
  if (!bundle) {
    fail(wire::ErrorCode::kCodeUnknown, "code hash not registered");
    return;
  }
  std::shared_ptr<const TaskRegistry> registry = resolver_(*bundle);
  if (!registry) {
    fail(wire::ErrorCode::kCodeUnknown, "bundle not loadable");
    return;
  }
  uint32_t impl_id = req.alt_impl_id != wire::kNoAlternative ? req.alt_impl_id : req.task_id;
  const TaskDescriptor* task = registry->find(impl_id);
  if (!task) {
    fail(wire::ErrorCode::kUnknownTask, "unknown task id " + std::to_string(impl_id));
    return;
  }

  // State arrival: deserialize, resolve cache proxies, snapshot pre-hashes.
  wire::ErrorCode arrival_error = wire::ErrorCode::kProtocol;
  std::string arrival_msg;
  {
    std::unique_lock lk(s.mu);
    try {
      s.graph = deserialize_graph(req.state);
      for (const auto& node : s.graph.nodes()) s.arrival_order.push_back(node->guid);

      auto check_root = [&](const Guid& g) {
        if (!s.graph.contains(g))
          throw ProtocolError("execute root not present in state: " + g.hex());
      };
      check_root(req.target_root);
      for (const Guid& g : req.param_roots) check_root(g);
      for (const Guid& g : req.static_roots) check_root(g);

      for (const auto& up : s.graph.nodes()) {
        ObjectNode& node = *up;
        if (node.is_in_cache) {
          const ServerCache::Entry* entry = cache_.get(node.guid);
          if (!entry) {
            arrival_error = wire::ErrorCode::kCacheMiss;
            throw ProtocolError("cache proxy for uncached object: " + node.guid.hex());
          }
          ByteReader r(entry->node_bytes);
          ObjectNode cached = decode_node(r);
          node.payload = cached.payload;
          node.refs = cached.refs;
          node.class_id = cached.class_id;
          node.proxyable = cached.proxyable;
          node.empty_container = false;
          node.is_in_cache = false;
          s.pre_hashes[node.guid] = entry->digest;
          s.stats.cache_restores++;
        } else if (!node.empty_container) {
          s.pre_hashes[node.guid] = content_hash(node);
        } else if (req.strategy == Strategy::kPipelined) {
          s.expected_pushes.insert(node.guid);
        }
      }
    } catch (const Error& e) {
      arrival_msg = e.what();
    }
  }
  if (!arrival_msg.empty()) {
    fail(arrival_error, arrival_msg);
    return;
  }

  // Dispatch.
  ServerTaskContext ctx(s, transport, clock, opts_, s.stats);
  TaskResult result;
  double exec_start = clock.now();
  try {
    result = task->impl(ctx, req.target_root, req.param_roots);
  } catch (const ExecAborted&) {
    // The ingest side already reported and closed the session.
    std::unique_lock lk(s.mu);
    save_stats(s);
    return;
  } catch (const FaultTimeout&) {
    fail(wire::ErrorCode::kFaultTimeout, "object fetch timed out");
    return;
  } catch (const std::exception& e) {
    fail(wire::ErrorCode::kTaskFailed, e.what());
    return;
  }
  double exec_seconds = clock.now() - exec_start;

  // Modified state: every node whose content hash changed or that has no
  // pre-hash (created or first materialized here), in arrival order. Nodes
  // still proxies were never touched and never escape to the client.
  std::unique_lock lk(s.mu);
  if (s.aborted) {
    save_stats(s);
    return;
  }
  ByteWriter modified;
  modified.bytes(std::span<const uint8_t>(
      reinterpret_cast<const uint8_t*>(kGraphMagic), 4));
  std::size_t count_at = modified.size();
  modified.u32(0);
  uint32_t modified_count = 0;
  for (const Guid& g : s.arrival_order) {
    const ObjectNode& node = s.graph.at(g);
    if (node.is_proxy()) continue;
    Md5Digest digest = content_hash(node);
    auto pre = s.pre_hashes.find(g);
    if (pre != s.pre_hashes.end() && pre->second == digest) continue;
    encode_node(modified, node);
    modified_count++;
  }
  modified.patch_u32(count_at, modified_count);

  // The cache absorbs every object the server now holds in full.
  for (const auto& up : s.graph.nodes()) {
    const ObjectNode& node = *up;
    if (node.is_proxy()) continue;
    ServerCache::Entry entry;
    entry.digest = content_hash(node);
    ObjectNode content = node;
    content.empty_container = false;
    content.is_in_cache = false;
    entry.node_bytes = encode_node_bytes(content);
    cache_.put(node.guid, std::move(entry));
  }

  wire::Result res;
  res.status = 0;
  res.return_payload = std::move(result.return_payload);
  res.modified_state = modified.take();
  res.bytes_received = transport.bytes_received() - s.bytes_base;
  res.exec_nanos = static_cast<uint64_t>(exec_seconds * 1e9);
  s.done = true;
  save_stats(s);
  transport.send(wire::encode(res));
}

}  // namespace offgrid
