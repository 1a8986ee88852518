#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "affmatch/errors.hpp"

namespace affmatch {

// Little-endian buffered serialization. All on-disk numbers go through these
// helpers so files are byte-identical across platforms and runs.
class BufWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }

  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  // Bit-exact: doubles are stored as their IEEE-754 bit pattern.
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }

  void str(const std::string& s) { bytes(s.data(), s.size()); }

  void write_file(const std::string& path) const {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("cannot open for writing: " + path);
    const std::size_t n = buf_.empty() ? 0 : std::fwrite(buf_.data(), 1, buf_.size(), f);
    const bool ok = (n == buf_.size()) && std::fclose(f) == 0;
    if (!ok) throw IoError("short write: " + path);
  }

  const std::vector<std::uint8_t>& buffer() const { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class BufReader {
 public:
  explicit BufReader(std::vector<std::uint8_t> data) : buf_(std::move(data)) {}

  static BufReader read_file(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw IoError("cannot open for reading: " + path);
    std::fseek(f, 0, SEEK_END);
    const long size = std::ftell(f);
    std::fseek(f, 0, SEEK_SET);
    std::vector<std::uint8_t> buf(size > 0 ? static_cast<std::size_t>(size) : 0);
    const std::size_t n = buf.empty() ? 0 : std::fread(buf.data(), 1, buf.size(), f);
    std::fclose(f);
    if (n != buf.size()) throw IoError("short read: " + path);
    return BufReader(std::move(buf));
  }

  std::uint8_t u8() { return take(1)[0]; }

  std::uint16_t u16() {
    const auto* p = take(2);
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
  }

  std::uint32_t u32() {
    const auto* p = take(4);
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  }

  std::uint64_t u64() {
    const auto* p = take(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  std::string str(std::size_t n) {
    const auto* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }

  bool at_end() const { return pos_ == buf_.size(); }

 private:
  const std::uint8_t* take(std::size_t n) {
    if (pos_ + n > buf_.size()) throw IoError("truncated buffer");
    const std::uint8_t* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

}  // namespace affmatch
