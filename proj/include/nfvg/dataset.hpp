// SPDX-License-Identifier: Apache-2.0
//
// Synthetic labelled moving-sprite videos, the NFVV container, and the
// train/validation split protocol.
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nfvg/binary_io.hpp"

namespace nfvg {
inline namespace NFVG_PRECISION_NS {

struct VideoRecord {
  int frames = 0;
  int channels = 3;
  int height = 0;
  int width = 0;
  int label = 0;
  int video_id = 0;
  std::vector<std::uint8_t> pixels;  // frame-major T x C x H x W

  std::size_t frame_size() const { return static_cast<std::size_t>(channels) * height * width; }
  std::uint8_t pixel(int t, int c, int y, int x) const {
    return pixels[((static_cast<std::size_t>(t) * channels + c) * height + y) * width + x];
  }
  std::span<const std::uint8_t> frame(int t) const {
    return std::span<const std::uint8_t>(pixels).subspan(t * frame_size(), frame_size());
  }
  void validate() const;

  friend bool operator==(const VideoRecord&, const VideoRecord&) = default;
};

enum class LabelScheme { kShapeDirection, kDirection, kShape };

std::string to_string(LabelScheme scheme);
LabelScheme label_scheme_from_string(const std::string& s);

inline constexpr const char* kShapeNames[] = {"square", "circle", "bar"};
inline constexpr const char* kDirectionNames[] = {"left", "right", "up", "down"};

struct CorpusSpec {
  int num_videos = 1000;
  int frames = 8;
  int size = 16;
  LabelScheme labels = LabelScheme::kShapeDirection;
  std::uint64_t seed = 0;
  double train_fraction = 0.99;

  void validate() const;
  int label_count() const;
  std::vector<std::string> label_names() const;
  nlohmann::json to_json() const;
  static CorpusSpec from_json(const nlohmann::json& j);
  // Hex CRC of the canonical JSON; binds checkpoints and reports to a corpus.
  std::string hash() const;
};

// Motion parameters decoded from a label (plus the per-video draws).
struct SpriteMotion {
  int shape = 0;      // index into kShapeNames
  int direction = 0;  // index into kDirectionNames
};

SpriteMotion motion_for(const CorpusSpec& spec, int label, std::uint64_t extra_draw);

// Pure function of (spec.seed, video_id).
VideoRecord generate_video_record(const CorpusSpec& spec, int video_id);

enum class Split { kTrain, kValidation };
std::string to_string(Split split);
Split split_from_string(const std::string& s);

// Split per video id; a pure function of (seed, num_videos, fraction).
std::vector<Split> assign_splits(const CorpusSpec& spec);

struct ManifestRow {
  int video_id = 0;
  int label = 0;
  Split split = Split::kTrain;
  std::string path;  // relative to the corpus root
};

struct Corpus {
  std::filesystem::path root;
  CorpusSpec spec;
  std::vector<ManifestRow> rows;

  std::vector<VideoRecord> load(Split split) const;
  VideoRecord load_video(int video_id) const;
};

// Writes corpus.json, manifest.csv and videos/NNNNNN.nfvv under dir.
Corpus generate_corpus(const CorpusSpec& spec, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);

// NFVV container: "NFVV", version, T, C, H, W, label, video-id as little-endian
// 32-bit ints (32-byte header), then frame-major pixel bytes.
inline constexpr std::uint32_t kVideoFormatVersion = 1;
inline constexpr std::size_t kVideoHeaderBytes = 32;

Bytes encode_video(const VideoRecord& video);
VideoRecord decode_video(std::span<const std::uint8_t> bytes);
void write_video(const std::filesystem::path& path, const VideoRecord& video);
VideoRecord read_video(const std::filesystem::path& path);

struct PpmImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // interleaved
};

// Binary P6 files frame_0000.ppm, frame_0001.ppm, ... (3-channel videos only).
std::vector<std::filesystem::path> export_frames(const VideoRecord& video, const std::filesystem::path& dir);
PpmImage read_ppm(const std::filesystem::path& path);

}  // namespace NFVG_PRECISION_NS
}  // namespace nfvg
