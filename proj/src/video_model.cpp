// SPDX-License-Identifier: Apache-2.0
#include "nfvg/video_model.hpp"

#include <algorithm>
#include <cmath>

namespace nfvg {
inline namespace NFVG_PRECISION_NS {

namespace {
constexpr std::uint64_t kModelInitStream = 0x4d4f;
constexpr std::uint64_t kSampleStream = 0x534d;
}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kInit: return "init";
    case Variant::kPrevFrame: return "prev_frame";
    case Variant::kState: return "state";
    case Variant::kStateLabel: return "state_label";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  for (Variant v : kAllVariants)
    if (to_string(v) == s) return v;
  throw UsageError("unknown variant '" + s + "' (expected init, prev_frame, state or state_label)");
}

int ModelConfig::tail_context_channels() const {
  switch (variant) {
    case Variant::kInit: return 0;
    case Variant::kPrevFrame: return channels;
    case Variant::kState:
    case Variant::kStateLabel: return state_channels + channels;
  }
  return 0;
}

GlowConfig ModelConfig::head_config() const {
  GlowConfig g;
  g.num_blocks = num_blocks;
  g.flows_per_block = flows_per_block;
  g.coupling = coupling;
  g.hidden = hidden;
  g.channels = channels;
  g.height = height;
  g.width = width;
  g.context_channels = uses_labels() ? channels : 0;
  return g;
}

GlowConfig ModelConfig::tail_config() const {
  GlowConfig g = head_config();
  g.context_channels = tail_context_channels();
  return g;
}

void ModelConfig::validate() const {
  head_config().validate();
  if (uses_processor() && (state_channels < 1 || processor_hidden < 1)) {
    throw ShapeError("model config: state channels and processor width must be positive");
  }
  if (uses_labels() && label_count < 1) throw ShapeError("model config: label count must be positive");
}

nlohmann::json ModelConfig::to_json() const {
  return nlohmann::json{{"variant", to_string(variant)},
                        {"num_blocks", num_blocks},
                        {"flows_per_block", flows_per_block},
                        {"coupling", to_string(coupling)},
                        {"hidden", hidden},
                        {"channels", channels},
                        {"height", height},
                        {"width", width},
                        {"state_channels", state_channels},
                        {"processor_hidden", processor_hidden},
                        {"label_count", label_count},
                        {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  if (j.contains("variant")) c.variant = variant_from_string(j["variant"].get<std::string>());
  c.num_blocks = j.value("num_blocks", c.num_blocks);
  c.flows_per_block = j.value("flows_per_block", c.flows_per_block);
  if (j.contains("coupling")) c.coupling = coupling_mode_from_string(j["coupling"].get<std::string>());
  c.hidden = j.value("hidden", c.hidden);
  c.channels = j.value("channels", c.channels);
  c.height = j.value("height", c.height);
  c.width = j.value("width", c.width);
  c.state_channels = j.value("state_channels", c.state_channels);
  c.processor_hidden = j.value("processor_hidden", c.processor_hidden);
  c.label_count = j.value("label_count", c.label_count);
  c.seed = j.value("seed", c.seed);
  return c;
}

Real pixel_to_model(std::uint8_t p, double u) { return static_cast<Real>((p + u) / 256.0 - 0.5); }

std::uint8_t model_to_pixel(Real v) {
  const double p = std::floor((static_cast<double>(v) + 0.5) * 256.0);
  if (!(p >= 0)) return 0;  // also maps NaN to 0
  return static_cast<std::uint8_t>(std::min(p, 255.0));
}

Tensor frame_batch(std::span<const VideoRecord* const> videos, int t, Rng* noise) {
  if (videos.empty()) throw ShapeError("frame_batch: no videos");
  const VideoRecord& first = *videos.front();
  const Shape s{static_cast<int>(videos.size()), first.channels, first.height, first.width};
  Tensor out = Tensor::zeros(s);
  auto dst = out.mutable_data();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t n = 0; n < videos.size(); ++n) {
    const VideoRecord& v = *videos[n];
    if (v.channels != s.c || v.height != s.h || v.width != s.w || t >= v.frames) {
      throw ShapeError("frame_batch: video " + std::to_string(v.video_id) + " does not match the batch shape");
    }
    const auto frame = v.frame(t);
    for (std::size_t i = 0; i < frame.size(); ++i) {
      dst[n * frame.size() + i] = pixel_to_model(frame[i], noise ? unit(*noise) : 0.5);
    }
  }
  return out;
}

double nats_per_dim(double continuous_log_prob, int dims) {
  return -continuous_log_prob / dims + kDequantNatsPerDim;
}

// ---------------------------------------------------------------------------

VideoModel::VideoModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  Rng rng = make_rng(config_.seed, 0, kModelInitStream);
  head_ = std::make_unique<Glow>(config_.head_config(), rng);
  tail_ = std::make_unique<Glow>(config_.tail_config(), rng);
  if (config_.uses_labels()) {
    head_pyramid_ = std::make_unique<PyramidNet>(config_.channels, config_.num_blocks, rng);
  }
  if (config_.tail_context_channels() > 0) {
    tail_pyramid_ = std::make_unique<PyramidNet>(config_.tail_context_channels(), config_.num_blocks, rng);
  }
  if (config_.uses_processor()) {
    processor_ = std::make_unique<ContextProcessor>(config_.state_channels, config_.channels,
                                                    config_.processor_hidden, rng);
  }
  if (config_.uses_labels()) {
    labels_ = std::make_unique<LabelEmbeddingTable>(config_.label_count, config_.channels, config_.height,
                                                    config_.width, rng);
  }
}

ConditioningPyramid VideoModel::head_context(std::span<const int> labels) {
  return head_pyramid_->build(labels_->lookup(labels));
}

VideoModel::FrameLogProbs VideoModel::log_probs(std::span<const Tensor> frames, std::span<const Tensor> context_frames,
                                                std::span<const int> labels) {
  if (frames.empty() || frames.size() != context_frames.size()) {
    throw ShapeError("log_probs: need matching non-empty frame and context-frame sequences");
  }
  const int batch = frames.front().shape().n;
  FrameLogProbs out;
  if (config_.uses_labels()) {
    if (labels.size() != static_cast<std::size_t>(batch)) {
      throw ShapeError("log_probs: label-conditioned head needs one label per sample");
    }
    const ConditioningPyramid ctx = head_context(labels);
    out.head = head_->log_prob(frames[0], &ctx);
  } else {
    out.head = head_->log_prob(frames[0]);
  }

  std::optional<ContextState> state;
  if (processor_) state = processor_->init_state(config_.height, config_.width, batch);
  for (std::size_t t = 1; t < frames.size(); ++t) {
    const Tensor& prev = context_frames[t - 1];
    switch (config_.variant) {
      case Variant::kInit:
        out.tail.push_back(tail_->log_prob(frames[t]));
        break;
      case Variant::kPrevFrame: {
        const ConditioningPyramid ctx = tail_pyramid_->build(prev);
        out.tail.push_back(tail_->log_prob(frames[t], &ctx));
        break;
      }
      case Variant::kState:
      case Variant::kStateLabel: {
        state = processor_->step_state(*state, prev);
        const ConditioningPyramid ctx = tail_pyramid_->build(processor_->make_tail_context(*state, prev));
        out.tail.push_back(tail_->log_prob(frames[t], &ctx));
        break;
      }
    }
  }
  return out;
}

ModuleState VideoModel::state() {
  ModuleState s;
  head_->collect(s, "head");
  tail_->collect(s, "tail");
  if (processor_) processor_->collect(s, "processor");
  if (labels_) labels_->collect(s, "embeddings");
  if (head_pyramid_) head_pyramid_->collect(s, "pyramid/head");
  if (tail_pyramid_) tail_pyramid_->collect(s, "pyramid/tail");
  return s;
}

void VideoModel::set_training(bool on) {
  head_->set_training(on);
  tail_->set_training(on);
  if (processor_) processor_->set_training(on);
}

void VideoModel::mark_untrained_initialized() {
  for (auto& b : state().buffers) {
    if (b.name.ends_with("/initialized")) b.tensor.mutable_data()[0] = 1;
  }
}

// ---------------------------------------------------------------------------

VideoRecord generate_video(VideoModel& model, std::optional<int> label, int num_frames, double temperature,
                           std::uint64_t seed) {
  if (num_frames < 1) throw UsageError("generate_video: need at least one frame");
  const ModelConfig& cfg = model.config();
  if (label && !cfg.uses_labels()) throw UsageError("generate_video: model has no label conditioning");
  if (!label && cfg.uses_labels()) label = 0;

  Rng rng = make_rng(seed, 0, kSampleStream);
  VideoRecord video;
  video.frames = num_frames;
  video.channels = cfg.channels;
  video.height = cfg.height;
  video.width = cfg.width;
  video.label = label.value_or(0);
  video.pixels.reserve(static_cast<std::size_t>(num_frames) * video.frame_size());

  auto append = [&video](const Tensor& frame) {
    for (Real v : frame.data()) video.pixels.push_back(model_to_pixel(v));
  };
  // Bin-centred model-space copy of the frame just emitted.
  auto last_frame = [&video]() {
    VideoRecord view = video;
    view.frames = static_cast<int>(view.pixels.size() / view.frame_size());
    const VideoRecord* ptr = &view;
    return frame_batch(std::span<const VideoRecord* const>(&ptr, 1), view.frames - 1, nullptr);
  };

  if (cfg.uses_labels()) {
    const int labels[1] = {*label};
    const ConditioningPyramid ctx = model.head_pyramid()->build(model.labels()->lookup(labels));
    append(model.head().sample(1, temperature, rng, &ctx));
  } else {
    append(model.head().sample(1, temperature, rng));
  }

  std::optional<ContextState> state;
  if (model.processor()) state = model.processor()->init_state(cfg.height, cfg.width);
  for (int t = 1; t < num_frames; ++t) {
    const Tensor prev = last_frame();
    switch (cfg.variant) {
      case Variant::kInit:
        append(model.tail().sample(1, temperature, rng));
        break;
      case Variant::kPrevFrame: {
        const ConditioningPyramid ctx = model.tail_pyramid()->build(prev);
        append(model.tail().sample(1, temperature, rng, &ctx));
        break;
      }
      case Variant::kState:
      case Variant::kStateLabel: {
        state = model.processor()->step_state(*state, prev);
        const ConditioningPyramid ctx =
            model.tail_pyramid()->build(model.processor()->make_tail_context(*state, prev));
        append(model.tail().sample(1, temperature, rng, &ctx));
        break;
      }
    }
  }
  return video;
}

}  // namespace NFVG_PRECISION_NS
}  // namespace nfvg
