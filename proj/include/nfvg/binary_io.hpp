// SPDX-License-Identifier: Apache-2.0
//
// Little-endian byte buffers shared by the video and checkpoint containers.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nfvg/errors.hpp"

namespace nfvg {
inline namespace NFVG_PRECISION_NS {

static_assert(std::endian::native == std::endian::little, "container formats assume a little-endian host");

using Bytes = std::vector<std::uint8_t>;

std::uint32_t crc32(std::span<const std::uint8_t> bytes);
std::uint32_t crc32(std::string_view text);
std::string hex32(std::uint32_t value);

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void f32(float v) { raw(&v, sizeof v); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }

  Bytes& bytes() { return bytes_; }

 private:
  Bytes bytes_;
};

// Reads fail with FormatError naming the field being read.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void raw(void* p, std::size_t n, const char* field) {
    if (n > remaining()) {
      throw FormatError(std::string("truncated data while reading ") + field);
    }
    std::memcpy(p, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32(const char* field) {
    std::uint32_t v;
    raw(&v, sizeof v, field);
    return v;
  }
  std::uint64_t u64(const char* field) {
    std::uint64_t v;
    raw(&v, sizeof v, field);
    return v;
  }
  float f32(const char* field) {
    float v;
    raw(&v, sizeof v, field);
    return v;
  }
  std::string str(const char* field) {
    const std::uint32_t n = u32(field);
    std::string s(n, '\0');
    raw(s.data(), n, field);
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace NFVG_PRECISION_NS
}  // namespace nfvg
