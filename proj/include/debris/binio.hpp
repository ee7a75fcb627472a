#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "debris/error.hpp"

namespace debris {

/// Append-only little-endian byte buffer used by every binary file format.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f32(float v);
  void f64(double v);
  void raw(std::string_view bytes) { bytes_.append(bytes); }
  /// u32 length prefix followed by the bytes.
  void str(std::string_view s);

  const std::string& bytes() const noexcept { return bytes_; }
  std::string take() && { return std::move(bytes_); }

 private:
  std::string bytes_;
};

/// Bounds-checked little-endian reader; a short read raises `error_kind`.
class ByteReader {
 public:
  ByteReader(std::string_view bytes, ErrorKind error_kind)
      : bytes_(bytes), kind_(error_kind) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  float f32();
  double f64();
  std::string_view raw(std::size_t n);
  std::string str();

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  void expect_end() const;

 private:
  void need(std::size_t n) const;

  std::string_view bytes_;
  ErrorKind kind_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);

/// Writes via a sibling temporary file and rename so readers never observe
/// a partially written artifact.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace debris
