#pragma once

#include <algorithm>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "doctest.h"

#include "offgrid/bytes.hpp"
#include "offgrid/client.hpp"
#include "offgrid/netsim.hpp"
#include "offgrid/object_model.hpp"
#include "offgrid/server.hpp"
#include "offgrid/splitmix.hpp"
#include "offgrid/tasks.hpp"
#include "offgrid/wire.hpp"

namespace offgrid::test {

inline Guid g(uint64_t n) { return Guid::from_u64(0, n); }

inline ObjectNode node(uint64_t id, std::vector<uint8_t> payload = {},
                       std::vector<Guid> refs = {}, bool proxyable = false) {
  ObjectNode n;
  n.guid = g(id);
  n.class_id = static_cast<uint32_t>(id);
  n.payload = std::move(payload);
  n.refs = std::move(refs);
  n.proxyable = proxyable;
  return n;
}

// Deterministic random graph for property tests: up to max_nodes nodes,
// arbitrary edges (cycles and self-loops allowed), mixed proxyable flags.
inline ObjectGraph random_graph(uint64_t seed, std::size_t max_nodes = 50) {
  SplitMix64 rng(seed);
  std::size_t n = 1 + rng.next() % max_nodes;
  ObjectGraph graph;
  for (std::size_t i = 0; i < n; ++i) {
    ObjectNode nd;
    nd.guid = g(1000 + i);
    nd.class_id = static_cast<uint32_t>(rng.next() % 8);
    nd.proxyable = rng.next() % 2 == 0;
    std::size_t plen = rng.next() % 40;
    nd.payload.resize(plen);
    for (auto& b : nd.payload) b = static_cast<uint8_t>(rng.next());
    graph.insert(std::move(nd));
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t edges = rng.next() % 4;
    ObjectNode& nd = graph.at(g(1000 + i));
    for (std::size_t e = 0; e < edges; ++e) nd.refs.push_back(g(1000 + rng.next() % n));
  }
  return graph;
}

// Independent closure oracle: repeated expansion to fixpoint, order-free.
inline std::set<Guid> closure_fixpoint(const ObjectGraph& graph, std::vector<Guid> roots) {
  std::set<Guid> reach(roots.begin(), roots.end());
  bool grew = true;
  while (grew) {
    grew = false;
    std::set<Guid> next = reach;
    for (const Guid& r : reach)
      for (const Guid& out : graph.at(r).refs)
        if (next.insert(out).second) grew = true;
    reach = std::move(next);
  }
  return reach;
}

inline std::vector<uint8_t> bytes_of(const std::string& s) {
  return std::vector<uint8_t>(s.begin(), s.end());
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

// --- test task library --------------------------------------------------------

inline constexpr uint32_t kEchoTask = 10;        // returns target payload
inline constexpr uint32_t kReadParamTask = 11;   // returns params[0] payload
inline constexpr uint32_t kMutateParamsTask = 12;  // flips byte 0 of each param
inline constexpr uint32_t kCreateNodeTask = 13;  // creates one derived node
inline constexpr uint32_t kTouchRefsTask = 14;   // mutates every ref of target
inline constexpr uint32_t kEchoTwiceTask = 15;   // alternative: payload doubled

inline std::vector<uint8_t> test_bundle() { return bytes_of("test.bundle.v1"); }

inline std::shared_ptr<const TaskRegistry> build_test_registry() {
  auto reg = std::make_shared<TaskRegistry>();

  TaskDescriptor echo;
  echo.task_id = kEchoTask;
  echo.impl = [](TaskContext& ctx, const Guid& target, std::span<const Guid>) {
    return TaskResult{ctx.access(target).payload, {}};
  };
  echo.compute_hint = [](const ObjectGraph&, const Guid&, std::span<const Guid>) {
    return 1000.0;
  };
  reg->register_task(std::move(echo));

  TaskDescriptor read;
  read.task_id = kReadParamTask;
  read.impl = [](TaskContext& ctx, const Guid&, std::span<const Guid> params) {
    return TaskResult{ctx.access(params[0]).payload, {}};
  };
  reg->register_task(std::move(read));

  TaskDescriptor mut;
  mut.task_id = kMutateParamsTask;
  mut.impl = [](TaskContext& ctx, const Guid&, std::span<const Guid> params) {
    TaskResult r;
    for (const Guid& p : params) {
      ObjectNode& n = ctx.access(p);
      if (!n.payload.empty()) n.payload[0] ^= 0xFF;
      r.modified.push_back(p);
    }
    return r;
  };
  reg->register_task(std::move(mut));

  TaskDescriptor create;
  create.task_id = kCreateNodeTask;
  create.impl = [](TaskContext& ctx, const Guid& target, std::span<const Guid>) {
    ObjectNode& t = ctx.access(target);
    ObjectNode fresh;
    fresh.guid = Guid::from_u64(0xC0FFEE, t.payload.empty() ? 0 : t.payload[0]);
    fresh.class_id = 99;
    fresh.payload = {1, 2, 3};
    ObjectNode& inserted = ctx.create(std::move(fresh));
    t.refs.push_back(inserted.guid);
    return TaskResult{{}, {inserted.guid, target}};
  };
  reg->register_task(std::move(create));

  TaskDescriptor touch;
  touch.task_id = kTouchRefsTask;
  touch.impl = [](TaskContext& ctx, const Guid& target, std::span<const Guid>) {
    std::vector<Guid> refs = ctx.access(target).refs;
    TaskResult r;
    for (const Guid& ref : refs) {
      ObjectNode& n = ctx.access(ref);
      if (!n.payload.empty()) n.payload[0] ^= 0xFF;
      ctx.charge(1000.0);
      r.modified.push_back(ref);
    }
    ByteWriter w;
    w.u32(static_cast<uint32_t>(refs.size()));
    r.return_payload = w.take();
    return r;
  };
  touch.access_order_hint = [](const ObjectGraph& g2, const Guid& target,
                               std::span<const Guid>) { return g2.at(target).refs; };
  reg->register_task(std::move(touch));

  TaskDescriptor echo2;
  echo2.task_id = kEchoTwiceTask;
  echo2.impl = [](TaskContext& ctx, const Guid& target, std::span<const Guid>) {
    std::vector<uint8_t> p = ctx.access(target).payload;
    std::vector<uint8_t> doubled = p;
    doubled.insert(doubled.end(), p.begin(), p.end());
    return TaskResult{doubled, {}};
  };
  reg->register_task(std::move(echo2));

  return reg;
}

inline std::shared_ptr<const TaskRegistry> resolve_test_bundle(
    std::span<const uint8_t> bundle) {
  static std::shared_ptr<const TaskRegistry> reg = build_test_registry();
  std::vector<uint8_t> expected = test_bundle();
  if (bundle.size() == expected.size() &&
      std::equal(bundle.begin(), bundle.end(), expected.begin()))
    return reg;
  return nullptr;
}

inline void register_test_tasks(Client& client, bool with_alternative = false) {
  auto reg = build_test_registry();
  for (auto [id, d] : reg->all()) {
    if (with_alternative && id == kEchoTask) d.alternative_impl_id = kEchoTwiceTask;
    client.register_task(std::move(d));
  }
}

// Virtual-clock client/server pair over one emulated link. The bench-side
// thread registers as an actor before the server ingest spawns, which keeps
// schedules deterministic.
struct TestBed {
  VirtualWorld world;
  VirtualLink link;
  Server server;
  std::optional<VirtualWorld::Scope> scope;
  std::thread ingest;

  explicit TestBed(LinkConfig cfg = presets().at("loopback"),
                   BundleResolver resolver = resolve_test_bundle,
                   ServerOptions sopts = {})
      : link(world, std::move(cfg)), server(std::move(resolver), std::move(sopts)) {
    scope.emplace(world);
    ingest = world.spawn([this] { server.serve_connection(link.server_end(), world); });
  }

  ~TestBed() {
    link.close();
    scope.reset();
    if (ingest.joinable()) ingest.join();
  }

  FrameTransport& client_end() { return link.client_end(); }

  // Raw-frame scripting against the server.
  void send(const wire::Message& m) { client_end().send(wire::encode(m)); }
  std::optional<wire::Message> recv(double timeout = 30.0) {
    std::vector<uint8_t> frame;
    if (client_end().recv(timeout, frame) != RecvStatus::kOk) return std::nullopt;
    return wire::decode(frame);
  }
};

}  // namespace offgrid::test
