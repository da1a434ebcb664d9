#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mind/error.hpp"

// Little-endian primitives shared by the trace, model and dataset codecs.
namespace mind::binary {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f32s(std::span<const float> vs) {
    if constexpr (std::endian::native == std::endian::little) {
      const auto* p = reinterpret_cast<const char*>(vs.data());
      buf_.append(p, vs.size() * sizeof(float));
    } else {
      for (float v : vs) f32(v);
    }
  }
  void bytes(std::string_view s) { buf_.append(s); }

  const std::string& data() const { return buf_; }
  std::string take() { return std::move(buf_); }
  void clear() { buf_.clear(); }

 private:
  std::string buf_;
};

inline std::uint16_t load_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint32_t load_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void load_f32s(const unsigned char* p, std::span<float> out) {
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(out.data(), p, out.size() * sizeof(float));
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::bit_cast<float>(load_u32(p + 4 * i));
  }
}

// Bounds-checked cursor over an in-memory buffer. `what` names the file kind
// in error messages.
class ByteReader {
 public:
  ByteReader(std::string_view data, std::string what) : data_(data), what_(std::move(what)) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(*take(1)); }
  std::uint16_t u16() { return load_u16(reinterpret_cast<const unsigned char*>(take(2))); }
  std::uint32_t u32() { return load_u32(reinterpret_cast<const unsigned char*>(take(4))); }
  float f32() { return std::bit_cast<float>(u32()); }
  void f32s(std::span<float> out) {
    load_f32s(reinterpret_cast<const unsigned char*>(take(out.size() * 4)), out);
  }
  std::string_view bytes(std::size_t n) { return {take(n), n}; }

  std::size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return pos_ == data_.size(); }

 private:
  const char* take(std::size_t n) {
    if (data_.size() - pos_ < n) throw DataError(what_ + ": truncated at byte " + std::to_string(pos_));
    const char* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::string_view data_;
  std::size_t pos_ = 0;
  std::string what_;
};

}  // namespace mind::binary
