#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kfbf/error.hpp"

namespace kfbf::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian and written with native byte order");

/// Append-only little-endian byte buffer.
class ByteWriter {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void f64s(std::span<const double> v) { raw(v.data(), v.size_bytes()); }

  std::size_t size() const noexcept { return buf_.size(); }
  const std::vector<char>& buffer() const noexcept { return buf_; }
  /// Overwrites 8 bytes at `offset` (used for back-patching offsets).
  void patch_u64(std::size_t offset, std::uint64_t v) { std::memcpy(buf_.data() + offset, &v, 8); }

  void save(const std::filesystem::path& path) const;

 private:
  void raw(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }

  std::vector<char> buf_;
};

/// Bounds-checked reader; every failure is a FormatError naming the offset.
class ByteReader {
 public:
  explicit ByteReader(std::vector<char> data) : buf_(std::move(data)) {}
  static ByteReader load(const std::filesystem::path& path);

  std::string bytes(std::size_t n, const char* what);
  std::uint32_t u32(const char* what) { return scalar<std::uint32_t>(what); }
  std::uint64_t u64(const char* what) { return scalar<std::uint64_t>(what); }
  double f64(const char* what) { return scalar<double>(what); }
  void f64s(std::span<double> out, const char* what);

  std::uint64_t offset() const noexcept { return pos_; }
  std::uint64_t size() const noexcept { return buf_.size(); }
  void seek(std::uint64_t pos, const char* what);
  std::uint64_t remaining() const noexcept { return buf_.size() - pos_; }

 private:
  void need(std::uint64_t n, const char* what) const;

  template <typename T>
  T scalar(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::vector<char> buf_;
  std::uint64_t pos_ = 0;
};

}  // namespace kfbf::io
