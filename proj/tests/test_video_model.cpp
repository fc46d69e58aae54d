// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "nfvg/training.hpp"
#include "nfvg/video_model.hpp"
#include "suites.hpp"

using namespace nfvg;

namespace {

ModelConfig tiny(Variant v) {
  ModelConfig c;
  c.variant = v;
  c.num_blocks = 2;
  c.flows_per_block = 2;
  c.hidden = 8;
  c.height = c.width = 8;
  c.state_channels = 4;
  c.processor_hidden = 8;
  c.label_count = 12;
  c.seed = 3;
  return c;
}

std::vector<VideoRecord> videos(int n, int frames, int size = 8) {
  CorpusSpec s;
  s.num_videos = n;
  s.frames = frames;
  s.size = size;
  s.seed = 21;
  std::vector<VideoRecord> out;
  for (int i = 0; i < n; ++i) out.push_back(generate_video_record(s, i));
  return out;
}

std::vector<const VideoRecord*> ptrs(const std::vector<VideoRecord>& v) {
  std::vector<const VideoRecord*> out;
  for (const auto& x : v) out.push_back(&x);
  return out;
}

}  // namespace

TEST(VideoModel, VariantNames) {
  for (Variant v : kAllVariants) EXPECT_EQ(variant_from_string(to_string(v)), v);
  EXPECT_THROW(variant_from_string("state+label"), UsageError);
}

TEST(VideoModel, ContextChannelsPerVariant) {
  EXPECT_EQ(tiny(Variant::kInit).tail_context_channels(), 0);
  EXPECT_EQ(tiny(Variant::kPrevFrame).tail_context_channels(), 3);
  EXPECT_EQ(tiny(Variant::kState).tail_context_channels(), 7);
  ModelConfig full;
  full.variant = Variant::kStateLabel;
  EXPECT_EQ(full.tail_context_channels(), 19);
  EXPECT_EQ(full.head_config().context_channels, 3);
  EXPECT_EQ(tiny(Variant::kState).head_config().context_channels, 0);
}

TEST(VideoModel, ComponentsPerVariant) {
  VideoModel init(tiny(Variant::kInit));
  EXPECT_EQ(init.processor(), nullptr);
  EXPECT_EQ(init.tail_pyramid(), nullptr);
  EXPECT_EQ(init.labels(), nullptr);
  VideoModel prev(tiny(Variant::kPrevFrame));
  EXPECT_EQ(prev.processor(), nullptr);
  EXPECT_NE(prev.tail_pyramid(), nullptr);
  VideoModel full(tiny(Variant::kStateLabel));
  EXPECT_NE(full.processor(), nullptr);
  EXPECT_NE(full.labels(), nullptr);
  EXPECT_NE(full.head_pyramid(), nullptr);
}

TEST(VideoModel, ParameterGroupsAreNamed) {
  VideoModel m(tiny(Variant::kStateLabel));
  std::set<std::string> groups;
  for (const auto& p : m.state().params) groups.insert(p.name.substr(0, p.name.find('/')));
  EXPECT_EQ(groups, (std::set<std::string>{"head", "tail", "processor", "embeddings", "pyramid"}));
}

TEST(VideoModel, ConfigJsonRoundTrip) {
  ModelConfig c = tiny(Variant::kStateLabel);
  c.coupling = CouplingMode::kAffine;
  const ModelConfig back = ModelConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
}

TEST(VideoModel, PixelMapping) {
  EXPECT_DOUBLE_EQ(pixel_to_model(0, 0.0), -0.5);
  EXPECT_DOUBLE_EQ(pixel_to_model(255, 1.0), 0.5);
  for (int p = 0; p < 256; ++p) {
    EXPECT_EQ(model_to_pixel(pixel_to_model(static_cast<std::uint8_t>(p), 0.5)), p);
    EXPECT_EQ(model_to_pixel(pixel_to_model(static_cast<std::uint8_t>(p), 0.999)), p);
  }
  EXPECT_EQ(model_to_pixel(-3.0), 0);
  EXPECT_EQ(model_to_pixel(3.0), 255);
  EXPECT_EQ(model_to_pixel(std::nan("")), 0);
  EXPECT_NEAR(kDequantNatsPerDim, std::log(256.0), 1e-15);
}

TEST(VideoModel, SingleFrameGenerationNeverTouchesProcessor) {
  VideoModel m(tiny(Variant::kState));
  m.mark_untrained_initialized();
  // Leave the processor's ActNorm uninitialised: any call to it would throw.
  ModuleState s;
  m.processor()->collect(s, "");
  s.buffers[0].tensor.mutable_data()[0] = 0;
  m.set_training(false);
  const VideoRecord v = generate_video(m, std::nullopt, 1, 1.0, 5);
  EXPECT_EQ(v.frames, 1);
  EXPECT_EQ(v.pixels.size(), 3u * 8 * 8);
  EXPECT_THROW(generate_video(m, std::nullopt, 2, 1.0, 5), StateError);
}

TEST(VideoModel, DeskScaleFourFrameVideo) {
  for (Variant variant : kAllVariants) {
    ModelConfig c;
    c.variant = variant;
    VideoModel m(c);
    Rng rng(4);
    suite::randomize_model(m, rng, 0.05);
    const VideoRecord v = generate_video(m, variant == Variant::kStateLabel ? std::optional<int>(3) : std::nullopt, 4,
                                         0.7, 11);
    EXPECT_EQ(v.frames, 4);
    EXPECT_EQ(v.height, 16);
    EXPECT_EQ(v.pixels.size(), 4u * 3 * 16 * 16);
    EXPECT_EQ(v.label, variant == Variant::kStateLabel ? 3 : 0);
    EXPECT_EQ(v, generate_video(m, variant == Variant::kStateLabel ? std::optional<int>(3) : std::nullopt, 4, 0.7, 11));
  }
}

TEST(VideoModel, LabelOnUnlabelledModelIsUsageError) {
  VideoModel m(tiny(Variant::kState));
  m.mark_untrained_initialized();
  EXPECT_THROW(generate_video(m, 2, 2, 1.0, 0), UsageError);
  EXPECT_THROW(generate_video(m, std::nullopt, 0, 1.0, 0), UsageError);
  VideoModel l(tiny(Variant::kStateLabel));
  l.mark_untrained_initialized();
  EXPECT_THROW(generate_video(l, 12, 2, 1.0, 0), IndexError);
}

// Loss against an independent sum of the per-frame log densities.
TEST(VideoModel, LossMatchesPerFrameSum) {
  for (Variant variant : kAllVariants) {
    VideoModel m(tiny(variant));
    Rng rng(9);
    suite::randomize_model(m, rng, 0.1);
    const auto data = videos(3, 4);
    const auto batch = ptrs(data);
    const LossTerms terms = video_loss(m, batch, nullptr);

    std::vector<Tensor> frames;
    for (int t = 0; t < 4; ++t) frames.push_back(frame_batch(batch, t, nullptr));
    std::vector<int> labels;
    for (const auto& v : data) labels.push_back(v.label);
    const auto lp = m.log_probs(frames, frames, labels);
    double head = 0, tail = 0;
    for (Real v : lp.head.data()) head += v;
    for (const auto& t : lp.tail)
      for (Real v : t.data()) tail += v;
    const double d = 3 * 8 * 8;
    EXPECT_NEAR(terms.loss.item(), -(head + tail) / (3 * 4 * d) + std::log(256.0), 1e-10) << to_string(variant);
    EXPECT_NEAR(terms.total_npd, terms.loss.item(), 1e-10);
    EXPECT_NEAR(terms.head_npd, -head / (3 * d) + std::log(256.0), 1e-10);
    EXPECT_NEAR(terms.tail_npd, -tail / (3 * 3 * d) + std::log(256.0), 1e-10);
    EXPECT_NEAR(terms.total_npd, (terms.head_npd + 3 * terms.tail_npd) / 4, 1e-10);
  }
}

TEST(VideoModel, SingleFrameLossHasNoTail) {
  VideoModel m(tiny(Variant::kState));
  Rng rng(10);
  suite::randomize_model(m, rng, 0.1);
  const auto data = videos(2, 1);
  const auto batch = ptrs(data);
  const LossTerms terms = video_loss(m, batch, nullptr);
  EXPECT_TRUE(std::isnan(terms.tail_npd));
  EXPECT_NEAR(terms.total_npd, terms.head_npd, 1e-12);
}

TEST(VideoModel, UntrainedIdentityHeadScoresGaussianDensity) {
  VideoModel m(tiny(Variant::kInit));
  m.mark_untrained_initialized();
  const auto data = videos(1, 1);
  const auto batch = ptrs(data);
  const Tensor x = frame_batch(batch, 0, nullptr);
  double sq = 0;
  for (Real v : x.data()) sq += v * v;
  const double d = 192;
  const double lp = -0.5 * sq - 0.5 * d * std::log(2 * std::numbers::pi);
  EXPECT_NEAR(video_loss(m, batch, nullptr).head_npd, -lp / d + std::log(256.0), 1e-10);
}

TEST(VideoModel, LabelChangesHeadDensityOnly) {
  VideoModel m(tiny(Variant::kStateLabel));
  Rng rng(12);
  suite::randomize_model(m, rng, 0.1);
  const auto data = videos(1, 3);
  const auto batch = ptrs(data);
  std::vector<Tensor> frames;
  for (int t = 0; t < 3; ++t) frames.push_back(frame_batch(batch, t, nullptr));
  const int a[1] = {1}, b[1] = {7};
  const auto la = m.log_probs(frames, frames, a);
  const auto lb = m.log_probs(frames, frames, b);
  EXPECT_GT(std::abs(la.head.item() - lb.head.item()), 1e-6);
  for (int t = 0; t < 2; ++t) EXPECT_EQ(la.tail[t].item(), lb.tail[t].item());
}

// The prev_frame tail sees one frame of history; the state tail sees more.
TEST(VideoModel, StateCarriesHistoryPrevFrameDoesNot) {
  const auto data = videos(1, 3);
  const auto batch = ptrs(data);
  std::vector<Tensor> frames;
  for (int t = 0; t < 3; ++t) frames.push_back(frame_batch(batch, t, nullptr));
  std::vector<Tensor> altered = frames;
  altered[0] = scale(frames[0], -1);
  for (Variant variant : {Variant::kPrevFrame, Variant::kState}) {
    VideoModel m(tiny(variant));
    Rng rng(13);
    suite::randomize_model(m, rng, 0.1);
    const auto base = m.log_probs(frames, frames, {});
    const auto moved = m.log_probs(frames, altered, {});
    const double change = std::abs(base.tail[1].item() - moved.tail[1].item());
    if (variant == Variant::kPrevFrame) {
      EXPECT_EQ(change, 0.0);
    } else {
      EXPECT_GT(change, 1e-8);
    }
  }
}
