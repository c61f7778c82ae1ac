#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "offgrid/guid.hpp"
#include "offgrid/md5.hpp"

namespace offgrid {

// Client-to-server transmission strategy for the reachable object graph.
enum class Strategy : uint8_t {
  kEager = 0,      // whole closure up front, no proxies
  kLazy = 1,       // proxies; server fetches objects on first touch
  kPipelined = 2,  // proxies; client streams the real objects unprompted
};

const char* strategy_name(Strategy s);

// One application object: identity, an opaque payload, and ordered outgoing
// references. A node serialized as a proxy carries identity only:
// empty_container set, payload and refs withheld. is_in_cache marks a proxy
// the receiver can restore from its object cache.
struct ObjectNode {
  Guid guid;
  uint32_t class_id = 0;
  std::vector<uint8_t> payload;
  std::vector<Guid> refs;
  bool proxyable = false;
  bool empty_container = false;
  bool is_in_cache = false;

  bool is_proxy() const { return empty_container || is_in_cache; }
};

// Directed, possibly cyclic object graph. Nodes keep insertion order so every
// iteration-dependent encoding is deterministic. Node addresses are stable
// across inserts (the server hydrates nodes while a task holds references
// into the graph).
class ObjectGraph {
 public:
  ObjectGraph() = default;
  ObjectGraph(ObjectGraph&&) = default;
  ObjectGraph& operator=(ObjectGraph&&) = default;

  ObjectGraph clone() const;

  // Throws ConflictError if the guid is already present.
  ObjectNode& insert(ObjectNode node);
  // Replaces content if present (guid keeps its slot), inserts otherwise.
  ObjectNode& upsert(ObjectNode node);

  ObjectNode* find(const Guid& g);
  const ObjectNode* find(const Guid& g) const;
  // Throws UnknownObjectError.
  ObjectNode& at(const Guid& g);
  const ObjectNode& at(const Guid& g) const;
  bool contains(const Guid& g) const { return index_.count(g) != 0; }
  std::size_t size() const { return nodes_.size(); }

  // Insertion-ordered view.
  const std::vector<std::unique_ptr<ObjectNode>>& nodes() const { return nodes_; }

  // Named static roots; always folded into the closure roots of an offload.
  std::map<std::string, Guid> statics;

 private:
  std::vector<std::unique_ptr<ObjectNode>> nodes_;
  std::unordered_map<Guid, std::size_t, GuidHash> index_;
};

// How serialize_graph may substitute proxies.
struct ProxyPolicy {
  Strategy mode = Strategy::kEager;
  bool cache_enabled = false;
};

// Digests of node copies last acknowledged by the server; only proxyable
// nodes previously transferred in full appear here.
struct ClientCacheView {
  std::unordered_map<Guid, Md5Digest, GuidHash> entries;
};

// Encoded size of an empty proxy node: guid + class_id + flags + ref count +
// payload length.
inline constexpr std::size_t kProxyNodeBytes = 29;
// Leading magic of every serialized graph stream.
inline constexpr char kGraphMagic[4] = {'C', 'O', 'G', '1'};

// --- Canonical encoding ----------------------------------------------------
// Node: guid(16) | class_id(4) | flags(1: bit0 empty_container, bit1
// is_in_cache, bit2 proxyable) | ref_count(4) | refs(16 x n) | payload_len(4)
// | payload. Stream: "COG1" | node_count(4) | nodes in closure order. All
// integers big-endian.

void encode_node(class ByteWriter& w, const ObjectNode& n);
ObjectNode decode_node(class ByteReader& r);
std::vector<uint8_t> encode_node_bytes(const ObjectNode& n);
std::size_t encoded_node_size(const ObjectNode& n);

// Single-node graph stream; what pipelined pushes and fetch replies carry.
std::vector<uint8_t> encode_node_stream(const ObjectNode& n);

// MD5 of the canonical encoding with the flags byte reduced to the proxyable
// bit, so the digest tracks content (payload, refs, class) and ignores
// transfer state.
Md5Digest content_hash(const ObjectNode& n);

// Transitive closure of roots over refs, deterministic BFS order: roots in
// the given order, then neighbors in refs order, first visit wins.
// Throws UnknownObjectError for a root or reference that does not resolve.
std::vector<Guid> reachable_closure(const ObjectGraph& g, std::span<const Guid> roots);

struct SerializedGraph {
  std::vector<uint8_t> bytes;
  // All proxied guids in closure order; the union of the two splits below.
  std::vector<Guid> elided;
  // Proxied because of the Lazy/Pipelined strategy (these travel later).
  std::vector<Guid> strategy_elided;
  // Proxied because the cache reported an unmodified hit (never re-sent).
  std::vector<Guid> cache_elided;
};

// Encodes the closure of roots. A proxyable node is emitted as a cache proxy
// when the policy enables the cache and its digest matches the cache view,
// else as a plain proxy when the strategy is Lazy or Pipelined. A proxied
// node's refs are withheld with its payload and restored on hydration.
SerializedGraph serialize_graph(const ObjectGraph& g, std::span<const Guid> roots,
                                const ProxyPolicy& policy,
                                const ClientCacheView* cache = nullptr);

// Inverse of serialize_graph on the receiving side. Throws ProtocolError on
// malformed framing, truncation, or a duplicate guid in the stream.
ObjectGraph deserialize_graph(std::span<const uint8_t> bytes);

// Replaces the proxy `g` with the real node decoded from node_bytes (a graph
// stream whose first node must carry the same guid). Any further nodes in the
// stream are inserted. Returns every guid materialized, hydrated node first.
// Throws IllegalStateError if the node is not a proxy, ProtocolError on guid
// mismatch.
std::vector<Guid> hydrate_proxy(ObjectGraph& g, const Guid& guid,
                                std::span<const uint8_t> node_bytes);

// Applies a server->client state return: overwrites nodes with matching
// guids, inserts new ones, leaves everything else untouched. The return is
// always full state; any proxy in it is a ProtocolError.
void apply_result_state(ObjectGraph& local, std::span<const uint8_t> returned);

// Order-independent digest over the whole graph (sorted guid + content hash
// pairs). The cross-placement equivalence check compares these.
Md5Digest graph_digest(const ObjectGraph& g);

}  // namespace offgrid
