#include "offgrid/object_model.hpp"

#include <algorithm>
#include <deque>
#include <unordered_set>

#include "offgrid/bytes.hpp"
#include "offgrid/errors.hpp"

namespace offgrid {

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kEager: return "eager";
    case Strategy::kLazy: return "lazy";
    case Strategy::kPipelined: return "pipelined";
  }
  return "?";
}

ObjectGraph ObjectGraph::clone() const {
  ObjectGraph g;
  for (const auto& n : nodes_) g.insert(*n);
  g.statics = statics;
  return g;
}

ObjectNode& ObjectGraph::insert(ObjectNode node) {
  if (index_.count(node.guid))
    throw ConflictError("duplicate guid in graph: " + node.guid.hex());
  auto up = std::make_unique<ObjectNode>(std::move(node));
  ObjectNode& ref = *up;
  index_.emplace(ref.guid, nodes_.size());
  nodes_.push_back(std::move(up));
  return ref;
}

ObjectNode& ObjectGraph::upsert(ObjectNode node) {
  auto it = index_.find(node.guid);
  if (it == index_.end()) return insert(std::move(node));
  ObjectNode& slot = *nodes_[it->second];
  slot = std::move(node);
  return slot;
}

ObjectNode* ObjectGraph::find(const Guid& g) {
  auto it = index_.find(g);
  return it == index_.end() ? nullptr : nodes_[it->second].get();
}

const ObjectNode* ObjectGraph::find(const Guid& g) const {
  auto it = index_.find(g);
  return it == index_.end() ? nullptr : nodes_[it->second].get();
}

ObjectNode& ObjectGraph::at(const Guid& g) {
  if (ObjectNode* n = find(g)) return *n;
  throw UnknownObjectError("unknown object: " + g.hex());
}

const ObjectNode& ObjectGraph::at(const Guid& g) const {
  if (const ObjectNode* n = find(g)) return *n;
  throw UnknownObjectError("unknown object: " + g.hex());
}

// --- encoding ---------------------------------------------------------------

namespace {

constexpr uint8_t kFlagEmpty = 0x01;
constexpr uint8_t kFlagInCache = 0x02;
constexpr uint8_t kFlagProxyable = 0x04;

uint8_t flags_of(const ObjectNode& n) {
  uint8_t f = 0;
  if (n.empty_container) f |= kFlagEmpty;
  if (n.is_in_cache) f |= kFlagInCache;
  if (n.proxyable) f |= kFlagProxyable;
  return f;
}

void encode_node_with_flags(ByteWriter& w, const ObjectNode& n, uint8_t flags) {
  w.bytes(n.guid.bytes);
  w.u32(n.class_id);
  w.u8(flags);
  w.u32(static_cast<uint32_t>(n.refs.size()));
  for (const Guid& r : n.refs) w.bytes(r.bytes);
  w.u32(static_cast<uint32_t>(n.payload.size()));
  w.bytes(n.payload);
}

}  // namespace

void encode_node(ByteWriter& w, const ObjectNode& n) {
  encode_node_with_flags(w, n, flags_of(n));
}

ObjectNode decode_node(ByteReader& r) {
  ObjectNode n;
  auto gb = r.bytes(16);
  std::copy(gb.begin(), gb.end(), n.guid.bytes.begin());
  n.class_id = r.u32();
  uint8_t flags = r.u8();
  if (flags & ~(kFlagEmpty | kFlagInCache | kFlagProxyable))
    throw ProtocolError("unknown node flag bits", r.pos() - 1);
  n.empty_container = flags & kFlagEmpty;
  n.is_in_cache = flags & kFlagInCache;
  n.proxyable = flags & kFlagProxyable;
  uint32_t nrefs = r.u32();
  if (static_cast<uint64_t>(nrefs) * 16 > r.remaining())
    throw ProtocolError("ref count exceeds stream", r.pos() - 4);
  n.refs.resize(nrefs);
  for (uint32_t i = 0; i < nrefs; ++i) {
    auto rb = r.bytes(16);
    std::copy(rb.begin(), rb.end(), n.refs[i].bytes.begin());
  }
  uint32_t plen = r.u32();
  auto pb = r.bytes(plen);
  n.payload.assign(pb.begin(), pb.end());
  // Flag discipline: a proxy carries identity only, and a cache proxy is a
  // form of proxy.
  if (n.is_in_cache && !n.empty_container)
    throw ProtocolError("is_in_cache without empty_container", r.pos());
  if (n.empty_container && (!n.payload.empty() || !n.refs.empty()))
    throw ProtocolError("proxy node with payload or refs", r.pos());
  if (!n.proxyable && n.is_proxy())
    throw ProtocolError("non-proxyable node serialized as proxy", r.pos());
  return n;
}

std::vector<uint8_t> encode_node_bytes(const ObjectNode& n) {
  ByteWriter w;
  encode_node(w, n);
  return w.take();
}

std::size_t encoded_node_size(const ObjectNode& n) {
  return kProxyNodeBytes + 16 * n.refs.size() + n.payload.size();
}

std::vector<uint8_t> encode_node_stream(const ObjectNode& n) {
  ByteWriter w;
  w.bytes(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(kGraphMagic), 4));
  w.u32(1);
  encode_node(w, n);
  return w.take();
}

Md5Digest content_hash(const ObjectNode& n) {
  ByteWriter w;
  encode_node_with_flags(w, n, n.proxyable ? kFlagProxyable : 0);
  return md5(w.view());
}

std::vector<Guid> reachable_closure(const ObjectGraph& g, std::span<const Guid> roots) {
  std::vector<Guid> order;
  std::unordered_set<Guid, GuidHash> seen;
  std::deque<Guid> queue;
  for (const Guid& r : roots) {
    if (!g.contains(r)) throw UnknownObjectError("unknown root: " + r.hex());
    if (seen.insert(r).second) queue.push_back(r);
  }
  while (!queue.empty()) {
    Guid cur = queue.front();
    queue.pop_front();
    order.push_back(cur);
    for (const Guid& r : g.at(cur).refs) {
      if (!g.contains(r))
        throw UnknownObjectError("dangling reference: " + r.hex());
      if (seen.insert(r).second) queue.push_back(r);
    }
  }
  return order;
}

SerializedGraph serialize_graph(const ObjectGraph& g, std::span<const Guid> roots,
                                const ProxyPolicy& policy, const ClientCacheView* cache) {
  std::vector<Guid> closure = reachable_closure(g, roots);
  SerializedGraph out;
  ByteWriter w;
  w.bytes(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(kGraphMagic), 4));
  w.u32(static_cast<uint32_t>(closure.size()));
  for (const Guid& guid : closure) {
    const ObjectNode& n = g.at(guid);
    bool cache_hit = false;
    if (policy.cache_enabled && cache && n.proxyable) {
      auto it = cache->entries.find(guid);
      cache_hit = it != cache->entries.end() && it->second == content_hash(n);
    }
    bool strategy_proxy =
        !cache_hit && policy.mode != Strategy::kEager && n.proxyable;
    if (cache_hit || strategy_proxy) {
      ObjectNode proxy;
      proxy.guid = n.guid;
      proxy.class_id = n.class_id;
      proxy.proxyable = true;
      proxy.empty_container = true;
      proxy.is_in_cache = cache_hit;
      encode_node(w, proxy);
      out.elided.push_back(guid);
      (cache_hit ? out.cache_elided : out.strategy_elided).push_back(guid);
    } else {
      encode_node(w, n);
    }
  }
  out.bytes = w.take();
  return out;
}

namespace {

// Shared stream walk: decodes count-prefixed nodes, rejecting duplicates.
std::vector<ObjectNode> decode_stream_nodes(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  auto magic = r.bytes(4);
  if (!std::equal(magic.begin(), magic.end(),
                  reinterpret_cast<const uint8_t*>(kGraphMagic)))
    throw ProtocolError("bad graph stream magic", 0);
  uint32_t count = r.u32();
  std::vector<ObjectNode> nodes;
  nodes.reserve(count);
  std::unordered_set<Guid, GuidHash> seen;
  for (uint32_t i = 0; i < count; ++i) {
    ObjectNode n = decode_node(r);
    if (!seen.insert(n.guid).second)
      throw ProtocolError("duplicate guid in stream: " + n.guid.hex(), r.pos());
    nodes.push_back(std::move(n));
  }
  r.expect_done("graph stream");
  return nodes;
}

}  // namespace

ObjectGraph deserialize_graph(std::span<const uint8_t> bytes) {
  ObjectGraph g;
  for (ObjectNode& n : decode_stream_nodes(bytes)) g.insert(std::move(n));
  return g;
}

std::vector<Guid> hydrate_proxy(ObjectGraph& g, const Guid& guid,
                                std::span<const uint8_t> node_bytes) {
  ObjectNode& slot = g.at(guid);
  if (!slot.is_proxy())
    throw IllegalStateError("hydrating a non-proxy node: " + guid.hex());
  std::vector<ObjectNode> nodes = decode_stream_nodes(node_bytes);
  if (nodes.empty() || nodes.front().guid != guid)
    throw ProtocolError("hydration guid mismatch for " + guid.hex());
  ObjectNode& real = nodes.front();
  if (real.is_proxy())
    throw ProtocolError("hydration payload is itself a proxy: " + guid.hex());
  std::vector<Guid> materialized;
  materialized.push_back(guid);
  slot.class_id = real.class_id;
  slot.payload = std::move(real.payload);
  slot.refs = std::move(real.refs);
  slot.proxyable = real.proxyable;
  slot.empty_container = false;
  slot.is_in_cache = false;
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    if (g.contains(nodes[i].guid)) continue;
    materialized.push_back(nodes[i].guid);
    g.insert(std::move(nodes[i]));
  }
  return materialized;
}

void apply_result_state(ObjectGraph& local, std::span<const uint8_t> returned) {
  std::vector<ObjectNode> nodes = decode_stream_nodes(returned);
  for (const ObjectNode& n : nodes) {
    if (n.is_proxy())
      throw ProtocolError("proxy node in result state: " + n.guid.hex());
  }
  for (ObjectNode& n : nodes) local.upsert(std::move(n));
}

Md5Digest graph_digest(const ObjectGraph& g) {
  std::vector<const ObjectNode*> nodes;
  nodes.reserve(g.size());
  for (const auto& n : g.nodes()) nodes.push_back(n.get());
  std::sort(nodes.begin(), nodes.end(),
            [](const ObjectNode* a, const ObjectNode* b) { return a->guid < b->guid; });
  ByteWriter w;
  for (const ObjectNode* n : nodes) {
    w.bytes(n->guid.bytes);
    w.bytes(content_hash(*n));
  }
  return md5(w.view());
}

}  // namespace offgrid
