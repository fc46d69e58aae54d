// SPDX-License-Identifier: Apache-2.0
#include "nfvg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "nfvg/params.hpp"

namespace nfvg {
inline namespace NFVG_PRECISION_NS {

namespace fs = std::filesystem;

namespace {
constexpr std::uint64_t kVideoStream = 0x5649;  // per-video draws
constexpr std::uint64_t kSplitStream = 0x5350;
}  // namespace

void VideoRecord::validate() const {
  if (frames < 1 || channels < 1 || height < 1 || width < 1) {
    throw FormatError("video: non-positive dimension");
  }
  if (pixels.size() != static_cast<std::size_t>(frames) * frame_size()) {
    throw FormatError("video: pixel count " + std::to_string(pixels.size()) + " does not match " +
                      std::to_string(frames) + "x" + std::to_string(channels) + "x" + std::to_string(height) +
                      "x" + std::to_string(width));
  }
}

std::string to_string(LabelScheme scheme) {
  switch (scheme) {
    case LabelScheme::kShapeDirection: return "shape_direction";
    case LabelScheme::kDirection: return "direction";
    case LabelScheme::kShape: return "shape";
  }
  return "?";
}

LabelScheme label_scheme_from_string(const std::string& s) {
  if (s == "shape_direction") return LabelScheme::kShapeDirection;
  if (s == "direction") return LabelScheme::kDirection;
  if (s == "shape") return LabelScheme::kShape;
  throw UsageError("unknown label scheme '" + s + "' (expected shape_direction, direction or shape)");
}

void CorpusSpec::validate() const {
  if (num_videos < 1) throw UsageError("corpus: --videos must be at least 1");
  if (frames < 1) throw UsageError("corpus: --frames must be at least 1");
  if (size < 4) throw UsageError("corpus: --size must be at least 4");
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) throw UsageError("corpus: train fraction must be in (0, 1]");
}

int CorpusSpec::label_count() const {
  switch (labels) {
    case LabelScheme::kShapeDirection: return 12;
    case LabelScheme::kDirection: return 4;
    case LabelScheme::kShape: return 3;
  }
  return 0;
}

std::vector<std::string> CorpusSpec::label_names() const {
  std::vector<std::string> out;
  for (int l = 0; l < label_count(); ++l) {
    switch (labels) {
      case LabelScheme::kShapeDirection:
        out.push_back(std::string(kShapeNames[l / 4]) + "," + kDirectionNames[l % 4]);
        break;
      case LabelScheme::kDirection: out.push_back(kDirectionNames[l]); break;
      case LabelScheme::kShape: out.push_back(kShapeNames[l]); break;
    }
  }
  return out;
}

nlohmann::json CorpusSpec::to_json() const {
  return nlohmann::json{{"format", "NFVV"},
                        {"num_videos", num_videos},
                        {"frames", frames},
                        {"size", size},
                        {"labels", to_string(labels)},
                        {"label_names", label_names()},
                        {"seed", seed},
                        {"train_fraction", train_fraction}};
}

CorpusSpec CorpusSpec::from_json(const nlohmann::json& j) {
  CorpusSpec s;
  s.num_videos = j.at("num_videos").get<int>();
  s.frames = j.at("frames").get<int>();
  s.size = j.at("size").get<int>();
  s.labels = label_scheme_from_string(j.at("labels").get<std::string>());
  s.seed = j.at("seed").get<std::uint64_t>();
  s.train_fraction = j.at("train_fraction").get<double>();
  s.validate();
  return s;
}

std::string CorpusSpec::hash() const { return hex32(crc32(to_json().dump())); }

SpriteMotion motion_for(const CorpusSpec& spec, int label, std::uint64_t extra_draw) {
  switch (spec.labels) {
    case LabelScheme::kShapeDirection: return {label / 4, label % 4};
    case LabelScheme::kDirection: return {static_cast<int>(extra_draw % 3), label};
    case LabelScheme::kShape: return {label, static_cast<int>(extra_draw % 4)};
  }
  return {};
}

namespace {

bool in_shape(int shape, int dx, int dy, int w, int h) {
  switch (shape) {
    case 0:  // square
    case 2:  // bar
      return dx < w && dy < h;
    case 1: {  // circle inscribed in the w x w box
      const double c = (w - 1) / 2.0;
      const double r = w / 2.0;
      return dx < w && dy < h && (dx - c) * (dx - c) + (dy - c) * (dy - c) <= r * r;
    }
  }
  return false;
}

}  // namespace

VideoRecord generate_video_record(const CorpusSpec& spec, int video_id) {
  Rng rng = make_rng(spec.seed, static_cast<std::uint64_t>(video_id), kVideoStream);
  auto uniform = [&rng](int lo, int hi) {  // inclusive
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };

  VideoRecord v;
  v.frames = spec.frames;
  v.channels = 3;
  v.height = spec.size;
  v.width = spec.size;
  v.video_id = video_id;
  v.label = uniform(0, spec.label_count() - 1);
  const SpriteMotion motion = motion_for(spec, v.label, static_cast<std::uint64_t>(uniform(0, 11)));

  const int s_min = std::max(2, spec.size / 5);
  const int s_max = std::max(s_min, spec.size / 4 + 1);
  const int extent = uniform(s_min, s_max);
  const int sprite_w = motion.shape == 2 ? std::min(spec.size - 1, extent + 2) : extent;
  const int sprite_h = motion.shape == 2 ? std::max(1, extent / 2) : extent;
  const int speed = uniform(1, 2);
  const int x0 = uniform(0, spec.size - 1);
  const int y0 = uniform(0, spec.size - 1);
  std::uint8_t background[3], color[3];
  for (auto& c : background) c = static_cast<std::uint8_t>(uniform(0, 63));
  for (auto& c : color) c = static_cast<std::uint8_t>(uniform(160, 255));

  static constexpr int kDx[] = {-1, 1, 0, 0};
  static constexpr int kDy[] = {0, 0, -1, 1};
  const int n = spec.size;
  v.pixels.resize(static_cast<std::size_t>(v.frames) * v.frame_size());
  for (int t = 0; t < v.frames; ++t) {
    const int px = ((x0 + kDx[motion.direction] * speed * t) % n + n) % n;
    const int py = ((y0 + kDy[motion.direction] * speed * t) % n + n) % n;
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const int dx = ((x - px) % n + n) % n;
        const int dy = ((y - py) % n + n) % n;
        const bool on = in_shape(motion.shape, dx, dy, sprite_w, sprite_h);
        for (int c = 0; c < 3; ++c) {
          v.pixels[((static_cast<std::size_t>(t) * 3 + c) * n + y) * n + x] = on ? color[c] : background[c];
        }
      }
  }
  return v;
}

std::string to_string(Split split) { return split == Split::kTrain ? "train" : "val"; }

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val" || s == "validation") return Split::kValidation;
  throw UsageError("unknown split '" + s + "' (expected train or val)");
}

std::vector<Split> assign_splits(const CorpusSpec& spec) {
  const int n = spec.num_videos;
  int n_train = static_cast<int>(std::floor(n * spec.train_fraction + 1e-9));
  if (spec.train_fraction < 1.0 && n >= 2 && n_train >= n) n_train = n - 1;
  n_train = std::max(n_train, n >= 2 ? 1 : n);

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(spec.seed, 0, kSplitStream);
  for (int i = n - 1; i > 0; --i) {
    const int j = std::uniform_int_distribution<int>(0, i)(rng);
    std::swap(order[i], order[j]);
  }
  std::vector<Split> out(n, Split::kValidation);
  for (int i = 0; i < n_train; ++i) out[order[i]] = Split::kTrain;
  return out;
}

// ---------------------------------------------------------------------------
// Corpus on disk

namespace {

std::string video_rel_path(int id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "videos/%06d.nfvv", id);
  return buf;
}

}  // namespace

Corpus generate_corpus(const CorpusSpec& spec, const fs::path& dir) {
  spec.validate();
  fs::create_directories(dir / "videos");
  const std::vector<Split> splits = assign_splits(spec);
  Corpus corpus{dir, spec, {}};
  for (int id = 0; id < spec.num_videos; ++id) {
    const VideoRecord v = generate_video_record(spec, id);
    const std::string rel = video_rel_path(id);
    write_video(dir / rel, v);
    corpus.rows.push_back({id, v.label, splits[id], rel});
  }
  {
    std::ofstream meta(dir / "corpus.json");
    meta << spec.to_json().dump(2) << "\n";
  }
  std::ofstream manifest(dir / "manifest.csv");
  manifest << "video_id,label,split,path\n";
  for (const auto& r : corpus.rows) {
    manifest << r.video_id << "," << r.label << "," << to_string(r.split) << "," << r.path << "\n";
  }
  if (!manifest) throw std::runtime_error("failed writing manifest in " + dir.string());
  return corpus;
}

Corpus load_corpus(const fs::path& dir) {
  std::ifstream meta(dir / "corpus.json");
  if (!meta) throw FormatError("corpus: missing " + (dir / "corpus.json").string());
  Corpus corpus{dir, CorpusSpec::from_json(nlohmann::json::parse(meta)), {}};
  std::ifstream manifest(dir / "manifest.csv");
  if (!manifest) throw FormatError("corpus: missing " + (dir / "manifest.csv").string());
  std::string line;
  std::getline(manifest, line);
  if (line != "video_id,label,split,path") throw FormatError("corpus: unexpected manifest header '" + line + "'");
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string id, label, split, path;
    std::getline(ss, id, ',');
    std::getline(ss, label, ',');
    std::getline(ss, split, ',');
    std::getline(ss, path);
    corpus.rows.push_back({std::stoi(id), std::stoi(label), split_from_string(split), path});
  }
  return corpus;
}

std::vector<VideoRecord> Corpus::load(Split split) const {
  std::vector<VideoRecord> out;
  for (const auto& r : rows)
    if (r.split == split) out.push_back(read_video(root / r.path));
  return out;
}

VideoRecord Corpus::load_video(int video_id) const {
  for (const auto& r : rows)
    if (r.video_id == video_id) return read_video(root / r.path);
  throw IndexError("corpus: no video with id " + std::to_string(video_id));
}

// ---------------------------------------------------------------------------
// NFVV container

Bytes encode_video(const VideoRecord& video) {
  video.validate();
  ByteWriter w;
  w.raw("NFVV", 4);
  w.u32(kVideoFormatVersion);
  for (int v : {video.frames, video.channels, video.height, video.width, video.label, video.video_id}) {
    w.u32(static_cast<std::uint32_t>(v));
  }
  w.raw(video.pixels.data(), video.pixels.size());
  return std::move(w.bytes());
}

VideoRecord decode_video(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  char magic[4];
  r.raw(magic, 4, "magic");
  if (std::string_view(magic, 4) != "NFVV") throw FormatError("video: bad magic (expected NFVV)");
  const std::uint32_t version = r.u32("version");
  if (version != kVideoFormatVersion) throw FormatError("video: unsupported version " + std::to_string(version));
  VideoRecord v;
  v.frames = static_cast<int>(r.u32("frames"));
  v.channels = static_cast<int>(r.u32("channels"));
  v.height = static_cast<int>(r.u32("height"));
  v.width = static_cast<int>(r.u32("width"));
  v.label = static_cast<int>(r.u32("label"));
  v.video_id = static_cast<int>(r.u32("video_id"));
  const std::size_t count = static_cast<std::size_t>(v.frames) * v.frame_size();
  if (r.remaining() != count) {
    throw FormatError("video: expected " + std::to_string(count) + " pixel bytes, found " +
                      std::to_string(r.remaining()) + " (truncated or corrupt)");
  }
  v.pixels.resize(count);
  r.raw(v.pixels.data(), count, "pixels");
  return v;
}

void write_video(const fs::path& path, const VideoRecord& video) { write_file(path, encode_video(video)); }

VideoRecord read_video(const fs::path& path) { return decode_video(read_file(path)); }

// ---------------------------------------------------------------------------
// PPM

std::vector<fs::path> export_frames(const VideoRecord& video, const fs::path& dir) {
  video.validate();
  if (video.channels != 3) throw ShapeError("export_frames: P6 needs 3 channels");
  fs::create_directories(dir);
  std::vector<fs::path> out;
  const std::size_t plane = static_cast<std::size_t>(video.height) * video.width;
  for (int t = 0; t < video.frames; ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%04d.ppm", t);
    ByteWriter w;
    const std::string header = "P6\n" + std::to_string(video.width) + " " + std::to_string(video.height) + "\n255\n";
    w.raw(header.data(), header.size());
    const auto frame = video.frame(t);
    for (std::size_t p = 0; p < plane; ++p)
      for (int c = 0; c < 3; ++c) w.raw(&frame[c * plane + p], 1);
    write_file(dir / name, w.bytes());
    out.push_back(dir / name);
  }
  return out;
}

PpmImage read_ppm(const fs::path& path) {
  const Bytes bytes = read_file(path);
  std::size_t pos = 0;
  // Header tokens separated by whitespace; single whitespace before the raster.
  auto token = [&]() {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
    return t;
  };
  if (token() != "P6") throw FormatError("ppm: bad magic in " + path.string());
  PpmImage img;
  img.width = std::stoi(token());
  img.height = std::stoi(token());
  if (std::stoi(token()) != 255) throw FormatError("ppm: only maxval 255 is supported");
  ++pos;
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height * 3;
  if (bytes.size() - pos != n) throw FormatError("ppm: raster size mismatch in " + path.string());
  img.rgb.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return img;
}

}  // namespace NFVG_PRECISION_NS
}  // namespace nfvg
