#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hybridboost/errors.hpp"

namespace hybridboost::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

/// Append-only little-endian byte sink.
class ByteWriter {
 public:
  void magic(std::string_view tag) { bytes_.insert(bytes_.end(), tag.begin(), tag.end()); }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void i32(std::int32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void f32(float v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void f32s(std::span<const double> values) {
    for (double v : values) f32(static_cast<float>(v));
  }
  void f64s(std::span<const double> values) {
    for (double v : values) f64(v);
  }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }
  void save(const std::filesystem::path& path) const;

 private:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked little-endian reader. Running past the end throws
/// CorruptionError naming the byte offset.
class ByteReader {
 public:
  ByteReader(std::vector<std::uint8_t> bytes, std::string origin)
      : bytes_(std::move(bytes)), origin_(std::move(origin)) {}

  static ByteReader from_file(const std::filesystem::path& path);

  /// Throws FormatError when the next bytes differ from `tag`.
  void expect_magic(std::string_view tag);
  /// Throws VersionError naming both versions on mismatch.
  std::uint32_t expect_version(std::uint32_t supported);

  std::uint32_t u32() { return pod<std::uint32_t>(); }
  std::int32_t i32() { return pod<std::int32_t>(); }
  std::uint64_t u64() { return pod<std::uint64_t>(); }
  float f32() { return pod<float>(); }
  double f64() { return pod<double>(); }
  std::string str();
  void f32s(std::span<double> out) {
    need(out.size() * sizeof(float));
    for (double& v : out) v = static_cast<double>(f32());
  }
  void f64s(std::span<double> out) {
    need(out.size() * sizeof(double));
    for (double& v : out) v = f64();
  }

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t size() const { return bytes_.size(); }
  const std::string& origin() const { return origin_; }
  /// Throws CorruptionError when unread bytes remain.
  void expect_end() const;
  void need(std::size_t n) const;

 private:
  template <class T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::vector<std::uint8_t> bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace hybridboost::io
