// SPDX-License-Identifier: Apache-2.0
#include "nfvg/context_processor.hpp"

#include <cmath>

namespace nfvg {
inline namespace NFVG_PRECISION_NS {

namespace {
// Residual branch output scale at random init; keeps early states small.
constexpr double kOutputInitScale = 0.1;
}  // namespace

ContextProcessor::ContextProcessor(int state_channels, int frame_channels, int hidden, Rng& rng, Init init)
    : state_channels_(state_channels), frame_channels_(frame_channels), actnorm_(state_channels + frame_channels) {
  const int in = state_channels + frame_channels;
  const Shape wa{hidden, in, 3, 3};
  const Shape wb{state_channels, hidden, 3, 3};
  wa_ = init == Init::kZero ? constant_parameter(wa, 0) : normal_parameter(wa, std::sqrt(2.0 / (9.0 * in)), rng);
  ba_ = constant_parameter(Shape{1, hidden, 1, 1}, 0);
  wb_ = init == Init::kRandom ? normal_parameter(wb, kOutputInitScale / std::sqrt(9.0 * hidden), rng)
                              : constant_parameter(wb, 0);
  bb_ = constant_parameter(Shape{1, state_channels, 1, 1}, 0);
}

ContextState ContextProcessor::init_state(int height, int width, int batch) const {
  if (height < 1 || width < 1 || batch < 1) throw ShapeError("init_state: dimensions must be positive");
  return {Tensor::zeros(Shape{batch, state_channels_, height, width}), 0};
}

void ContextProcessor::check(const ContextState& state, const Tensor& frame) const {
  const Shape& ss = state.state.shape();
  const Shape& fs = frame.shape();
  if (ss.c != state_channels_ || fs.c != frame_channels_ || ss.n != fs.n || ss.h != fs.h || ss.w != fs.w) {
    throw ShapeError("context processor: state " + ss.str() + " and frame " + fs.str() + " do not match");
  }
}

ContextState ContextProcessor::step_state(const ContextState& state, const Tensor& prev_frame) {
  check(state, prev_frame);
  const Tensor in = actnorm_.forward(concat_channels(state.state, prev_frame)).y;
  const Tensor h = relu(conv2d(in, wa_, ba_, 1, 1));
  const Tensor delta = conv2d(h, wb_, bb_, 1, 1);
  return {add(state.state, delta), state.step + 1};
}

Tensor ContextProcessor::make_tail_context(const ContextState& state, const Tensor& prev_frame) const {
  check(state, prev_frame);
  return concat_channels(state.state, prev_frame);
}

std::size_t ContextProcessor::parameter_count() {
  ModuleState s;
  collect(s, "");
  std::size_t total = 0;
  for (const auto& p : s.params) total += p.tensor.numel();
  return total;
}

void ContextProcessor::collect(ModuleState& state, const std::string& prefix) {
  actnorm_.collect(state, join_name(prefix, "actnorm"));
  state.params.push_back({join_name(prefix, "conv_a/weight"), wa_});
  state.params.push_back({join_name(prefix, "conv_a/bias"), ba_});
  state.params.push_back({join_name(prefix, "conv_b/weight"), wb_});
  state.params.push_back({join_name(prefix, "conv_b/bias"), bb_});
}

}  // namespace NFVG_PRECISION_NS
}  // namespace nfvg
