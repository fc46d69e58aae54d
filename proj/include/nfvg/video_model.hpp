// SPDX-License-Identifier: Apache-2.0
//
// Head (first frame) and tail (next frame) generators plus the recurrent
// context that links them.
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nfvg/conditioning.hpp"
#include "nfvg/context_processor.hpp"
#include "nfvg/dataset.hpp"
#include "nfvg/glow.hpp"

namespace nfvg {
inline namespace NFVG_PRECISION_NS {

// Conditioning configurations compared in the ablation.
//   init:        unconditioned head and tail, evaluated untrained
//   prev_frame:  tail sees the previous frame
//   state:       tail sees recurrent state ‖ previous frame
//   state_label: state, plus a label-conditioned head
enum class Variant { kInit, kPrevFrame, kState, kStateLabel };

inline constexpr Variant kAllVariants[] = {Variant::kInit, Variant::kPrevFrame, Variant::kState,
                                           Variant::kStateLabel};

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct ModelConfig {
  Variant variant = Variant::kState;
  int num_blocks = 2;
  int flows_per_block = 4;
  CouplingMode coupling = CouplingMode::kAdditive;
  int hidden = 64;
  int channels = 3;
  int height = 16;
  int width = 16;
  int state_channels = 16;
  int processor_hidden = 32;
  int label_count = 12;
  std::uint64_t seed = 0;

  bool uses_processor() const { return variant == Variant::kState || variant == Variant::kStateLabel; }
  bool uses_labels() const { return variant == Variant::kStateLabel; }
  int tail_context_channels() const;
  int dims() const { return channels * height * width; }

  GlowConfig head_config() const;
  GlowConfig tail_config() const;
  void validate() const;

  nlohmann::json to_json() const;
  // Missing keys keep their defaults.
  static ModelConfig from_json(const nlohmann::json& j);
};

// log(256): per-dimension volume of one 8-bit quantisation bin on [0, 1).
inline constexpr double kDequantNatsPerDim = 5.545177444479562;

// Model space: pixel p maps to (p + u) / 256 - 0.5 with u in [0, 1).
Real pixel_to_model(std::uint8_t p, double u);
std::uint8_t model_to_pixel(Real v);

// (N, C, H, W) frame t of each video. noise == nullptr uses bin centres (u = 0.5).
Tensor frame_batch(std::span<const VideoRecord* const> videos, int t, Rng* noise);

// Continuous log density (nats) -> discrete negative log-likelihood in nats/dim.
double nats_per_dim(double continuous_log_prob, int dims);

class VideoModel {
 public:
  struct FrameLogProbs {
    Tensor head;               // (N,1,1,1) or undefined when not evaluated
    std::vector<Tensor> tail;  // frames 1..T-1
  };

  explicit VideoModel(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  Glow& head() { return *head_; }
  Glow& tail() { return *tail_; }
  PyramidNet* head_pyramid() { return head_pyramid_.get(); }
  PyramidNet* tail_pyramid() { return tail_pyramid_.get(); }
  ContextProcessor* processor() { return processor_.get(); }
  LabelEmbeddingTable* labels() { return labels_.get(); }

  // frames: model-space (possibly dequantised) inputs scored by the flows.
  // context_frames: bin-centred frames used as conditioning history.
  FrameLogProbs log_probs(std::span<const Tensor> frames, std::span<const Tensor> context_frames,
                          std::span<const int> labels);

  // Named parameters and buffers, each prefixed by its group
  // (head, tail, processor, embeddings, pyramid).
  ModuleState state();
  void set_training(bool on);
  // Freezes every ActNorm at its current (identity) parameters without data.
  void mark_untrained_initialized();

 private:
  ConditioningPyramid head_context(std::span<const int> labels);

  ModelConfig config_;
  std::unique_ptr<Glow> head_;
  std::unique_ptr<Glow> tail_;
  std::unique_ptr<PyramidNet> head_pyramid_;
  std::unique_ptr<PyramidNet> tail_pyramid_;
  std::unique_ptr<ContextProcessor> processor_;
  std::unique_ptr<LabelEmbeddingTable> labels_;
};

// Frame 0 from the head; each later frame from the tail conditioned on the
// variant's context built from the generated history.
VideoRecord generate_video(VideoModel& model, std::optional<int> label, int num_frames, double temperature,
                           std::uint64_t seed);

}  // namespace NFVG_PRECISION_NS
}  // namespace nfvg
