// SPDX-License-Identifier: Apache-2.0
#include "nfvg/checkpoint.hpp"

#include <unordered_map>

namespace nfvg {
inline namespace NFVG_PRECISION_NS {

Bytes Checkpoint::serialize() const {
  ByteWriter w;
  w.raw("NFVG", 4);
  w.u32(kCheckpointVersion);
  w.str(config_json);
  w.u64(step);
  w.u64(cursor);
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    w.str(e.name);
    w.u32(static_cast<std::uint32_t>(e.dims.size()));
    for (auto d : e.dims) w.u32(d);
    for (float v : e.values) w.f32(v);
  }
  const std::uint32_t crc = crc32(w.bytes());
  w.u32(crc);
  return std::move(w.bytes());
}

Checkpoint Checkpoint::parse(std::span<const std::uint8_t> bytes) {
  ByteReader head(bytes);
  char magic[4];
  head.raw(magic, 4, "magic");
  if (std::string_view(magic, 4) != "NFVG") throw FormatError("checkpoint: bad magic (expected NFVG)");
  const std::uint32_t version = head.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  if (bytes.size() < 12) throw FormatError("checkpoint: checksum missing (file truncated)");
  const auto body = bytes.first(bytes.size() - 4);
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
  if (crc32(body) != stored) throw FormatError("checkpoint: checksum mismatch (file truncated or corrupt)");

  ByteReader r(body);
  r.raw(magic, 4, "magic");
  r.u32("version");
  Checkpoint c;
  c.config_json = r.str("config");
  c.step = r.u64("step");
  c.cursor = r.u64("cursor");
  const std::uint32_t count = r.u32("entry count");
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    e.name = r.str("entry name");
    const std::uint32_t rank = r.u32("entry rank");
    if (rank > 8) throw FormatError("checkpoint: implausible rank for entry " + e.name);
    std::size_t total = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      e.dims.push_back(r.u32("entry dims"));
      total *= e.dims.back();
    }
    if (total * 4 > r.remaining()) throw FormatError("checkpoint: values of entry " + e.name + " truncated");
    e.values.resize(total);
    r.raw(e.values.data(), total * 4, "entry values");
    c.entries.push_back(std::move(e));
  }
  if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes after entries");
  return c;
}

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

void Checkpoint::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

Checkpoint Checkpoint::load(const std::filesystem::path& path) { return parse(read_file(path)); }

CheckpointEntry to_entry(const std::string& name, const Tensor& t) {
  const Shape& s = t.shape();
  CheckpointEntry e{name,
                    {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c), static_cast<std::uint32_t>(s.h),
                     static_cast<std::uint32_t>(s.w)},
                    {}};
  e.values.reserve(t.numel());
  for (Real v : t.data()) e.values.push_back(static_cast<float>(v));
  return e;
}

void append_entries(Checkpoint& ckpt, const ParamList& list, const std::string& prefix) {
  for (const auto& p : list) ckpt.entries.push_back(to_entry(join_name(prefix, p.name), p.tensor));
}

void assign_entries(const Checkpoint& ckpt, const ParamList& list, const std::string& prefix) {
  std::unordered_map<std::string, const CheckpointEntry*> index;
  for (const auto& e : ckpt.entries) index[e.name] = &e;
  std::vector<const CheckpointEntry*> matched;
  for (const auto& p : list) {
    const std::string name = join_name(prefix, p.name);
    auto it = index.find(name);
    if (it == index.end()) throw FormatError("checkpoint: missing entry " + name);
    const CheckpointEntry& e = *it->second;
    const Shape& s = p.tensor.shape();
    const std::vector<std::uint32_t> want{static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
                                          static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)};
    if (e.dims != want) throw FormatError("checkpoint: entry " + name + " has the wrong shape for " + s.str());
    matched.push_back(&e);
  }
  for (std::size_t i = 0; i < list.size(); ++i) {
    Tensor t = list[i].tensor;
    auto dst = t.mutable_data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = static_cast<Real>(matched[i]->values[k]);
  }
}

}  // namespace NFVG_PRECISION_NS
}  // namespace nfvg
