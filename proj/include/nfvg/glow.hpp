// SPDX-License-Identifier: Apache-2.0
//
// Multi-scale Glow generator: per block squeeze -> K flow steps -> split,
// with no split after the last block.
#pragma once

#include <memory>
#include <string>
#include <vector>

#include "nfvg/conditioning.hpp"
#include "nfvg/flow.hpp"
#include "nfvg/params.hpp"

namespace nfvg {
inline namespace NFVG_PRECISION_NS {

struct GlowConfig {
  int num_blocks = 2;
  int flows_per_block = 4;
  CouplingMode coupling = CouplingMode::kAdditive;
  int hidden = 64;
  int channels = 3;
  int height = 16;
  int width = 16;
  // Channels of the conditioning pyramid; 0 for an unconditioned model.
  int context_channels = 0;

  void validate() const;
  int dims() const { return channels * height * width; }

  static GlowConfig full_scale();  // 4 blocks x 32 flows at 64x64
  static GlowConfig desk_scale();   // 2 blocks x 4 flows at 16x16
};

class Glow {
 public:
  struct Encoded {
    LatentStack z;
    Tensor logdet;  // (N,1,1,1) or (1,1,1,1)
  };

  Glow(const GlowConfig& config, Rng& rng);

  const GlowConfig& config() const { return config_; }
  bool conditioned() const { return config_.context_channels > 0; }

  Encoded encode(const Tensor& x, const ConditioningPyramid* context = nullptr);
  Tensor decode(const LatentStack& z, const ConditioningPyramid* context = nullptr);

  // Continuous log density of x in nats, per sample: (N,1,1,1).
  // NumericError when any value is not finite.
  Tensor log_prob(const Tensor& x, const ConditioningPyramid* context = nullptr);

  std::vector<Shape> latent_shapes(int batch) const;
  LatentStack draw_latents(int batch, double temperature, Rng& rng) const;
  // temperature 0 decodes the all-zero latent stack.
  Tensor sample(int batch, double temperature, Rng& rng, const ConditioningPyramid* context = nullptr);

  void collect(ModuleState& state, const std::string& prefix);
  void set_training(bool on);
  FlowStep& step(int block, int index) { return *blocks_.at(block).at(index); }

 private:
  void check_input(const Tensor& x) const;
  // Context for block b's couplings: the pyramid level squeezed to the block's
  // post-squeeze resolution, or undefined when unconditioned.
  std::vector<Tensor> block_contexts(const ConditioningPyramid* context, int batch) const;

  GlowConfig config_;
  std::vector<std::vector<std::unique_ptr<FlowStep>>> blocks_;
};

}  // namespace NFVG_PRECISION_NS
}  // namespace nfvg
