// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "nfvg/flow.hpp"
#include "nfvg/params.hpp"
#include "nfvg/tensor.hpp"

namespace nfvg {
inline namespace NFVG_PRECISION_NS {

struct ContextState {
  Tensor state;  // (N, state_channels, H, W)
  int step = 0;
};

// Residual recurrent update
//   next = state + conv_b(relu(conv_a(actnorm(state ‖ frame))))
// with 3x3 stride-1 convolutions.
class ContextProcessor {
 public:
  enum class Init { kRandom, kZeroOutput, kZero };

  ContextProcessor(int state_channels, int frame_channels, int hidden, Rng& rng, Init init = Init::kRandom);

  int state_channels() const { return state_channels_; }
  int frame_channels() const { return frame_channels_; }
  int context_channels() const { return state_channels_ + frame_channels_; }

  ContextState init_state(int height, int width, int batch = 1) const;
  ContextState step_state(const ContextState& state, const Tensor& prev_frame);
  // state ‖ prev_frame, fed to the tail model's pyramid.
  Tensor make_tail_context(const ContextState& state, const Tensor& prev_frame) const;

  std::size_t parameter_count();
  void collect(ModuleState& state, const std::string& prefix);
  void set_training(bool on) { actnorm_.set_training(on); }
  ActNorm& actnorm() { return actnorm_; }
  Tensor& conv_a_weight() { return wa_; }
  Tensor& conv_b_weight() { return wb_; }

 private:
  void check(const ContextState& state, const Tensor& frame) const;

  int state_channels_;
  int frame_channels_;
  ActNorm actnorm_;
  Tensor wa_, ba_, wb_, bb_;
};

}  // namespace NFVG_PRECISION_NS
}  // namespace nfvg
