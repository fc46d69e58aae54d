// SPDX-License-Identifier: Apache-2.0
//
// "NFVG" checkpoint container, little-endian:
//
//   magic "NFVG" | u32 version | u32 len + config JSON | u64 step | u64 cursor
//   u32 entry count, then per entry:
//     u32 len + name | u32 rank | u32 dims[rank] | f32 values[prod(dims)]
//   u32 CRC-32 of every preceding byte
//
// Entry names carry their group as the first path component (head, tail,
// processor, embeddings, pyramid, optimizer).
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nfvg/binary_io.hpp"
#include "nfvg/params.hpp"

namespace nfvg {
inline namespace NFVG_PRECISION_NS {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  friend bool operator==(const CheckpointEntry&, const CheckpointEntry&) = default;
};

struct Checkpoint {
  std::string config_json;
  std::uint64_t step = 0;    // training iterations completed
  std::uint64_t cursor = 0;  // next batch index in the data order
  std::vector<CheckpointEntry> entries;

  Bytes serialize() const;
  // FormatError naming the failing field; nothing is returned on failure.
  static Checkpoint parse(std::span<const std::uint8_t> bytes);

  const CheckpointEntry* find(const std::string& name) const;
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

CheckpointEntry to_entry(const std::string& name, const Tensor& t);
void append_entries(Checkpoint& ckpt, const ParamList& list, const std::string& prefix = "");
// Validates every name and shape before writing any value.
void assign_entries(const Checkpoint& ckpt, const ParamList& list, const std::string& prefix = "");

}  // namespace NFVG_PRECISION_NS
}  // namespace nfvg
