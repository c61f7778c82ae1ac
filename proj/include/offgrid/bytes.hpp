#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <vector>

#include "offgrid/errors.hpp"

namespace offgrid {

// Big-endian append-only buffer. All multi-byte integers on the wire and in
// serialized graphs go through this.
class ByteWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(v); }
  void u16(uint16_t v) {
    buf_.push_back(static_cast<uint8_t>(v >> 8));
    buf_.push_back(static_cast<uint8_t>(v));
  }
  void u32(uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) buf_.push_back(static_cast<uint8_t>(v >> s));
  }
  void u64(uint64_t v) {
    for (int s = 56; s >= 0; s -= 8) buf_.push_back(static_cast<uint8_t>(v >> s));
  }
  void f64(double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    u64(bits);
  }
  void bytes(std::span<const uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void zeros(std::size_t n) { buf_.insert(buf_.end(), n, 0); }

  std::size_t size() const { return buf_.size(); }
  const std::vector<uint8_t>& view() const { return buf_; }
  std::vector<uint8_t> take() { return std::move(buf_); }

  // Patches a previously written 32-bit slot (used for length back-fill).
  void patch_u32(std::size_t at, uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_[at + i] = static_cast<uint8_t>(v >> (24 - 8 * i));
  }

 private:
  std::vector<uint8_t> buf_;
};

// Bounds-checked big-endian cursor over a read-only buffer. Any read past the
// end raises ProtocolError carrying the offset of the failed read.
class ByteReader {
 public:
  explicit ByteReader(std::span<const uint8_t> data) : data_(data) {}

  uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  uint16_t u16() {
    need(2);
    uint16_t v = static_cast<uint16_t>(data_[pos_] << 8 | data_[pos_ + 1]);
    pos_ += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = v << 8 | data_[pos_ + i];
    pos_ += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = v << 8 | data_[pos_ + i];
    pos_ += 8;
    return v;
  }
  double f64() {
    uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::span<const uint8_t> bytes(std::size_t n) {
    need(n);
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return pos_ == data_.size(); }

  // Decoders call this after consuming a complete structure; trailing bytes
  // inside a frame are a length mismatch, not padding.
  void expect_done(const char* what) const {
    if (!done()) throw ProtocolError(std::string("trailing bytes after ") + what, pos_);
  }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw ProtocolError("truncated input", pos_);
  }

  std::span<const uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace offgrid
