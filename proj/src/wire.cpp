#include "offgrid/wire.hpp"

#include <limits>

#include "offgrid/bytes.hpp"
#include "offgrid/errors.hpp"

namespace offgrid::wire {

namespace {

void put_digest(ByteWriter& w, const Md5Digest& d) { w.bytes(d); }

Md5Digest take_digest(ByteReader& r) {
  Md5Digest d;
  auto b = r.bytes(16);
  std::copy(b.begin(), b.end(), d.begin());
  return d;
}

Guid take_guid(ByteReader& r) {
  Guid g;
  auto b = r.bytes(16);
  std::copy(b.begin(), b.end(), g.bytes.begin());
  return g;
}

void put_guids(ByteWriter& w, const std::vector<Guid>& gs) {
  w.u32(static_cast<uint32_t>(gs.size()));
  for (const Guid& g : gs) w.bytes(g.bytes);
}

std::vector<Guid> take_guids(ByteReader& r) {
  uint32_t n = r.u32();
  if (static_cast<uint64_t>(n) * 16 > r.remaining())
    throw ProtocolError("guid list exceeds frame", r.pos() - 4);
  std::vector<Guid> gs(n);
  for (uint32_t i = 0; i < n; ++i) gs[i] = take_guid(r);
  return gs;
}

void put_blob(ByteWriter& w, std::span<const uint8_t> b) {
  w.u32(static_cast<uint32_t>(b.size()));
  w.bytes(b);
}

std::vector<uint8_t> take_blob(ByteReader& r) {
  uint32_t n = r.u32();
  auto b = r.bytes(n);
  return {b.begin(), b.end()};
}

struct BodyEncoder {
  ByteWriter& w;

  void operator()(const CodeCheck& m) { put_digest(w, m.hash); }
  void operator()(const CodeNeed& m) { put_digest(w, m.hash); }
  void operator()(const CodeUpload& m) {
    put_digest(w, m.hash);
    put_blob(w, m.bundle);
  }
  void operator()(const CodeOk& m) { put_digest(w, m.hash); }
  void operator()(const Execute& m) {
    w.u32(m.task_id);
    w.u32(m.alt_impl_id);
    w.u8(static_cast<uint8_t>(m.strategy));
    put_digest(w, m.code_hash);
    w.bytes(m.target_root.bytes);
    put_guids(w, m.param_roots);
    put_guids(w, m.static_roots);
    put_blob(w, m.state);
  }
  void operator()(const ObjectFetch& m) { w.bytes(m.guid.bytes); }
  void operator()(const ObjectPush& m) {
    w.bytes(m.guid.bytes);
    put_blob(w, m.node_bytes);
  }
  void operator()(const Result& m) {
    w.u8(m.status);
    put_blob(w, m.return_payload);
    put_blob(w, m.modified_state);
    w.u64(m.bytes_received);
    w.u64(m.exec_nanos);
  }
  void operator()(const RemoteError& m) {
    w.u32(static_cast<uint32_t>(m.code));
    put_blob(w, std::span<const uint8_t>(
                    reinterpret_cast<const uint8_t*>(m.message.data()), m.message.size()));
  }
  void operator()(const Ping&) {}
  void operator()(const Pong&) {}
  void operator()(const Probe& m) { w.bytes(m.filler); }
};

Strategy take_strategy(ByteReader& r) {
  uint8_t v = r.u8();
  if (v > 2) throw ProtocolError("unknown strategy code", r.pos() - 1);
  return static_cast<Strategy>(v);
}

Message decode_body(Kind kind, ByteReader& r) {
  switch (kind) {
    case Kind::kCodeCheck:
      return CodeCheck{take_digest(r)};
    case Kind::kCodeNeed:
      return CodeNeed{take_digest(r)};
    case Kind::kCodeUpload: {
      CodeUpload m;
      m.hash = take_digest(r);
      m.bundle = take_blob(r);
      return m;
    }
    case Kind::kCodeOk:
      return CodeOk{take_digest(r)};
    case Kind::kExecute: {
      Execute m;
      m.task_id = r.u32();
      m.alt_impl_id = r.u32();
      m.strategy = take_strategy(r);
      m.code_hash = take_digest(r);
      m.target_root = take_guid(r);
      m.param_roots = take_guids(r);
      m.static_roots = take_guids(r);
      m.state = take_blob(r);
      return m;
    }
    case Kind::kObjectFetch:
      return ObjectFetch{take_guid(r)};
    case Kind::kObjectPush: {
      ObjectPush m;
      m.guid = take_guid(r);
      m.node_bytes = take_blob(r);
      return m;
    }
    case Kind::kResult: {
      Result m;
      m.status = r.u8();
      m.return_payload = take_blob(r);
      m.modified_state = take_blob(r);
      m.bytes_received = r.u64();
      m.exec_nanos = r.u64();
      return m;
    }
    case Kind::kRemoteError: {
      RemoteError m;
      m.code = static_cast<ErrorCode>(r.u32());
      auto b = take_blob(r);
      m.message.assign(b.begin(), b.end());
      return m;
    }
    case Kind::kPing:
      return Ping{};
    case Kind::kPong:
      return Pong{};
    case Kind::kProbe: {
      Probe m;
      auto b = r.bytes(r.remaining());
      m.filler.assign(b.begin(), b.end());
      return m;
    }
  }
  throw ProtocolError("unreachable kind");
}

}  // namespace

Kind kind_of(const Message& m) {
  return static_cast<Kind>(m.index() + 1);
}

std::vector<uint8_t> encode(const Message& m) {
  ByteWriter w;
  w.u32(0);  // length back-filled below
  w.u8(static_cast<uint8_t>(kind_of(m)));
  std::visit(BodyEncoder{w}, m);
  std::size_t content = w.size() - 4;
  if (content > static_cast<std::size_t>(std::numeric_limits<int32_t>::max()))
    throw OversizeMessageError("frame content exceeds 2^31-1 bytes");
  w.patch_u32(0, static_cast<uint32_t>(content));
  return w.take();
}

Message decode(std::span<const uint8_t> frame) {
  ByteReader r(frame);
  uint32_t len = r.u32();
  if (len < 1) throw ProtocolError("frame length below minimum", 0);
  if (static_cast<std::size_t>(len) != frame.size() - 4)
    throw ProtocolError("frame length mismatch", 0);
  uint8_t kind_byte = r.u8();
  if (kind_byte < 1 || kind_byte > 12)
    throw ProtocolError("unknown message kind " + std::to_string(kind_byte), 4);
  Message m = decode_body(static_cast<Kind>(kind_byte), r);
  r.expect_done("message body");
  return m;
}

std::size_t frame_length(std::span<const uint8_t> prefix4) {
  if (prefix4.size() < 4) throw ProtocolError("short length prefix", 0);
  uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len = len << 8 | prefix4[i];
  return static_cast<std::size_t>(len) + 4;
}

}  // namespace offgrid::wire
