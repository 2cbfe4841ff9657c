#pragma once

// Little-endian byte encoding shared by the binary containers, plus a
// bounds-checked reader that reports the offset of the first bad byte.

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cmi/errors.hpp"

namespace cmi::detail {

class ByteWriter {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }

  std::vector<std::uint8_t>& buffer() { return buf_; }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> data, std::string context) : data_(data), context_(std::move(context)) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  bool at_end() const { return pos_ == data_.size(); }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n)
      throw FormatError(context_ + ": truncated " + what + " (need " + std::to_string(n) + " bytes, have " +
                            std::to_string(remaining()) + ")",
                        pos_);
  }

  std::string_view bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string_view s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return data_[pos_++];
  }
  std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(get(4, what, false)); }
  std::uint32_t u32_be(const char* what) { return static_cast<std::uint32_t>(get(4, what, true)); }
  std::uint64_t u64(const char* what) { return get(8, what, false); }
  double f64(const char* what) { return std::bit_cast<double>(get(8, what, false)); }

  [[noreturn]] void fail(const std::string& msg, std::size_t at) const { throw FormatError(context_ + ": " + msg, at); }
  [[noreturn]] void fail(const std::string& msg) const { fail(msg, pos_); }

 private:
  std::uint64_t get(int n, const char* what, bool big_endian) {
    need(static_cast<std::size_t>(n), what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      const int shift = big_endian ? 8 * (n - 1 - i) : 8 * i;
      v |= static_cast<std::uint64_t>(data_[pos_ + i]) << shift;
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const std::uint8_t> data_;
  std::string context_;
  std::size_t pos_ = 0;
};

}  // namespace cmi::detail
