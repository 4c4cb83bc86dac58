#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "grec/error.hpp"

namespace grec::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}

  void bytes(std::string_view b) { os_.write(b.data(), static_cast<std::streamsize>(b.size())); }
  template <typename U>
  void pod(U v) {
    static_assert(std::is_trivially_copyable_v<U>);
    os_.write(reinterpret_cast<const char*>(&v), sizeof(U));
  }
  void u8(std::uint8_t v) { pod(v); }
  void u16(std::uint16_t v) { pod(v); }
  void u32(std::uint32_t v) { pod(v); }
  void u64(std::uint64_t v) { pod(v); }
  void f32(float v) { pod(v); }
  void f64(double v) { pod(v); }
  void string(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }
  template <typename U>
  void array(std::span<const U> values) {
    os_.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size_bytes()));
  }
  void check() const {
    if (!os_) throw FormatError("write failed");
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  std::string bytes(std::size_t n) {
    std::string out(n, '\0');
    is_.read(out.data(), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) throw FormatError("unexpected end of stream");
    return out;
  }
  template <typename U>
  U pod() {
    U v;
    is_.read(reinterpret_cast<char*>(&v), sizeof(U));
    if (is_.gcount() != static_cast<std::streamsize>(sizeof(U))) {
      throw FormatError("unexpected end of stream");
    }
    return v;
  }
  std::uint8_t u8() { return pod<std::uint8_t>(); }
  std::uint16_t u16() { return pod<std::uint16_t>(); }
  std::uint32_t u32() { return pod<std::uint32_t>(); }
  std::uint64_t u64() { return pod<std::uint64_t>(); }
  float f32() { return pod<float>(); }
  double f64() { return pod<double>(); }
  std::string string(std::size_t max_len = 1u << 20) {
    const auto n = u32();
    if (n > max_len) throw FormatError("string length out of range");
    return bytes(n);
  }
  template <typename U>
  void array(std::span<U> out) {
    is_.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size_bytes()));
    if (static_cast<std::size_t>(is_.gcount()) != out.size_bytes()) {
      throw FormatError("unexpected end of stream");
    }
  }
  void expect_magic(std::string_view magic) {
    if (bytes(magic.size()) != magic) {
      throw FormatError("bad magic, expected '" + std::string(magic) + "'");
    }
  }

 private:
  std::istream& is_;
};

}  // namespace grec::io
