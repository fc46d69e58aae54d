// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include "nfvg/dataset.hpp"
#include "tmpdir.hpp"

using namespace nfvg;
namespace fs = std::filesystem;

namespace {

CorpusSpec spec_with(int videos, std::uint64_t seed) {
  CorpusSpec s;
  s.num_videos = videos;
  s.seed = seed;
  return s;
}

// Circular mean of the sprite's column and row; sprite pixels are bright,
// the background is dark.
std::pair<double, double> circular_centroid(const VideoRecord& v, int t) {
  double cx = 0, sx = 0, cy = 0, sy = 0;
  const double k = 2 * std::numbers::pi / v.width;
  for (int y = 0; y < v.height; ++y)
    for (int x = 0; x < v.width; ++x) {
      if (v.pixel(t, 0, y, x) < 128) continue;
      cx += std::cos(k * x);
      sx += std::sin(k * x);
      cy += std::cos(k * y);
      sy += std::sin(k * y);
    }
  return {std::atan2(sx, cx) / k, std::atan2(sy, cy) / k};
}

// Signed displacement mod n, folded into (-n/2, n/2].
double wrapped(double d, int n) {
  d = std::fmod(d, n);
  if (d > n / 2.0) d -= n;
  if (d <= -n / 2.0) d += n;
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Dataset, LabelSchemeHasTwelveLabels) {
  CorpusSpec s;
  EXPECT_EQ(s.label_count(), 12);
  EXPECT_EQ(s.label_names()[0], "square,left");
  EXPECT_EQ(s.label_names()[11], "bar,down");
  EXPECT_EQ(s.frames, 8);
  EXPECT_EQ(s.size, 16);
  EXPECT_DOUBLE_EQ(s.train_fraction, 0.99);
}

TEST(Dataset, VideosAreDeterministicAndPixelsValid) {
  const CorpusSpec s = spec_with(20, 7);
  for (int id = 0; id < 20; ++id) {
    const VideoRecord a = generate_video_record(s, id);
    EXPECT_EQ(a, generate_video_record(s, id));
    EXPECT_EQ(a.pixels.size(), 8u * 3 * 16 * 16);
    EXPECT_GE(a.label, 0);
    EXPECT_LT(a.label, 12);
  }
  EXPECT_NE(generate_video_record(s, 0), generate_video_record(spec_with(20, 8), 0));
}

TEST(Dataset, CorporaAreByteIdentical) {
  TempDir a("corpus_a"), b("corpus_b");
  const CorpusSpec s = spec_with(12, 7);
  generate_corpus(s, a.path);
  generate_corpus(s, b.path);
  EXPECT_EQ(slurp(a / "manifest.csv"), slurp(b / "manifest.csv"));
  EXPECT_EQ(slurp(a / "corpus.json"), slurp(b / "corpus.json"));
  for (int id = 0; id < 12; ++id) {
    char name[32];
    std::snprintf(name, sizeof name, "videos/%06d.nfvv", id);
    EXPECT_EQ(slurp(a / name), slurp(b / name)) << name;
  }
  const Corpus loaded = load_corpus(a.path);
  EXPECT_EQ(loaded.rows.size(), 12u);
  EXPECT_EQ(loaded.spec.hash(), s.hash());
  EXPECT_EQ(loaded.load_video(3), generate_video_record(s, 3));
}

TEST(Dataset, CentroidFollowsLabelledDirection) {
  const CorpusSpec s = spec_with(240, 11);
  std::set<int> seen;
  for (int id = 0; id < 240; ++id) {
    const VideoRecord v = generate_video_record(s, id);
    const SpriteMotion m = motion_for(s, v.label, 0);
    seen.insert(v.label);
    static constexpr int kDx[] = {-1, 1, 0, 0};
    static constexpr int kDy[] = {0, 0, -1, 1};
    for (int t = 1; t < v.frames; ++t) {
      const auto [x0, y0] = circular_centroid(v, t - 1);
      const auto [x1, y1] = circular_centroid(v, t);
      const double dx = wrapped(x1 - x0, v.width);
      const double dy = wrapped(y1 - y0, v.height);
      if (kDx[m.direction] != 0) {
        EXPECT_GT(dx * kDx[m.direction], 0.5) << "video " << id << " frame " << t;
        EXPECT_NEAR(dy, 0.0, 1e-9);
      } else {
        EXPECT_GT(dy * kDy[m.direction], 0.5) << "video " << id << " frame " << t;
        EXPECT_NEAR(dx, 0.0, 1e-9);
      }
      EXPECT_LE(std::abs(dx) + std::abs(dy), 2.0 + 1e-9);
    }
  }
  EXPECT_EQ(seen.size(), 12u);
}

TEST(Dataset, SplitIsNinetyNineToOne) {
  const CorpusSpec s = spec_with(1000, 3);
  const auto splits = assign_splits(s);
  int train = 0, val = 0;
  for (Split x : splits) (x == Split::kTrain ? train : val)++;
  EXPECT_EQ(train, 990);
  EXPECT_EQ(val, 10);
  EXPECT_EQ(splits, assign_splits(s));
  EXPECT_NE(splits, assign_splits(spec_with(1000, 4)));
}

TEST(Dataset, SplitsAreDisjointAndExhaustive) {
  for (std::uint64_t seed : {0u, 1u, 2u, 3u, 99u}) {
    TempDir d("split" + std::to_string(seed));
    CorpusSpec s = spec_with(50, seed);
    s.train_fraction = 0.8;
    const Corpus c = generate_corpus(s, d.path);
    std::set<int> train, val;
    for (const auto& r : c.rows) (r.split == Split::kTrain ? train : val).insert(r.video_id);
    EXPECT_EQ(train.size() + val.size(), 50u);
    for (int id : val) EXPECT_EQ(train.count(id), 0u);
    EXPECT_EQ(c.load(Split::kTrain).size(), train.size());
    for (const auto& v : c.load(Split::kValidation)) EXPECT_EQ(val.count(v.video_id), 1u);
  }
}

TEST(Dataset, VideoContainerRoundTripAndSize) {
  TempDir d("nfvv");
  const VideoRecord v = generate_video_record(spec_with(4, 5), 2);
  write_video(d / "v.nfvv", v);
  EXPECT_EQ(fs::file_size(d / "v.nfvv"), 32u + 6144u);
  EXPECT_EQ(read_video(d / "v.nfvv"), v);
  const Bytes bytes = encode_video(v);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "NFVV");
}

TEST(Dataset, FullScaleRecordUsesSamePath) {
  TempDir d("nfvv_big");
  CorpusSpec s = spec_with(1, 1);
  s.frames = 30;
  s.size = 64;
  const VideoRecord v = generate_video_record(s, 0);
  write_video(d / "big.nfvv", v);
  const VideoRecord r = read_video(d / "big.nfvv");
  EXPECT_EQ(r.frames, 30);
  EXPECT_EQ(r.height, 64);
  EXPECT_EQ(r, v);
  EXPECT_EQ(fs::file_size(d / "big.nfvv"), 32u + 30u * 3 * 64 * 64);
}

TEST(Dataset, ContainerErrors) {
  const VideoRecord v = generate_video_record(spec_with(1, 1), 0);
  Bytes bytes = encode_video(v);
  Bytes bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_video(bad_magic), FormatError);
  Bytes truncated(bytes.begin(), bytes.end() - 1);
  EXPECT_THROW(decode_video(truncated), FormatError);
  Bytes header_only(bytes.begin(), bytes.begin() + 20);
  EXPECT_THROW(decode_video(header_only), FormatError);
  Bytes trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(decode_video(trailing), FormatError);
  EXPECT_THROW(read_video("/nonexistent/nope.nfvv"), std::exception);
}

TEST(Dataset, PpmExportAndReimport) {
  TempDir d("ppm");
  CorpusSpec s = spec_with(1, 9);
  s.frames = 4;
  const VideoRecord v = generate_video_record(s, 0);
  const auto files = export_frames(v, d.path);
  ASSERT_EQ(files.size(), 4u);
  EXPECT_EQ(files[0].filename(), "frame_0000.ppm");
  EXPECT_EQ(files[3].filename(), "frame_0003.ppm");
  EXPECT_EQ(slurp(files[0]).substr(0, 13), "P6\n16 16\n255\n");
  for (int t = 0; t < 4; ++t) {
    const PpmImage img = read_ppm(files[t]);
    ASSERT_EQ(img.width, 16);
    ASSERT_EQ(img.height, 16);
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x)
        for (int c = 0; c < 3; ++c) ASSERT_EQ(img.rgb[(y * 16 + x) * 3 + c], v.pixel(t, c, y, x));
  }
}
