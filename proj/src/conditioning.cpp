// SPDX-License-Identifier: Apache-2.0
#include "nfvg/conditioning.hpp"

#include <cmath>

namespace nfvg {
inline namespace NFVG_PRECISION_NS {

PyramidNet::PyramidNet(int channels, int num_levels, Rng& rng, Init init)
    : channels_(channels), num_levels_(num_levels) {
  if (num_levels < 1) throw ShapeError("pyramid: need at least one level");
  for (int i = 1; i < num_levels; ++i) {
    const Shape ws{channels, channels, 3, 3};
    weights_.push_back(init == Init::kZero ? constant_parameter(ws, 0)
                                           : normal_parameter(ws, std::sqrt(2.0 / (9.0 * channels)), rng));
    biases_.push_back(constant_parameter(Shape{1, channels, 1, 1}, 0));
  }
}

ConditioningPyramid PyramidNet::build(const Tensor& context) const {
  const Shape& s = context.shape();
  if (s.c != channels_) {
    throw ShapeError("pyramid: expected " + std::to_string(channels_) + " context channels, got " + s.str());
  }
  const int factor = 1 << (num_levels_ - 1);
  if (s.h % factor != 0 || s.w % factor != 0) {
    throw ShapeError("pyramid: context " + s.str() + " not divisible by 2^" + std::to_string(num_levels_ - 1));
  }
  ConditioningPyramid out;
  out.levels.push_back(context);
  for (int i = 0; i + 1 < num_levels_; ++i) {
    out.levels.push_back(relu(conv2d(out.levels.back(), weights_[i], biases_[i], 2, 1)));
  }
  return out;
}

void PyramidNet::collect(ModuleState& state, const std::string& prefix) {
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    const std::string level = join_name(prefix, "down" + std::to_string(i));
    state.params.push_back({join_name(level, "weight"), weights_[i]});
    state.params.push_back({join_name(level, "bias"), biases_[i]});
  }
}

// ---------------------------------------------------------------------------

LabelEmbeddingTable::LabelEmbeddingTable(int label_count, int channels, int height, int width, Rng& rng)
    : table_(normal_parameter(Shape{label_count, channels, height, width}, kInitStd, rng)) {}

Tensor LabelEmbeddingTable::lookup(int label) const {
  const int idx[1] = {label};
  return lookup(idx);
}

Tensor LabelEmbeddingTable::lookup(std::span<const int> labels) const {
  for (int l : labels) {
    if (l < 0 || l >= label_count()) {
      throw IndexError("label " + std::to_string(l) + " outside [0, " + std::to_string(label_count()) + ")");
    }
  }
  return gather(table_, labels);
}

double LabelEmbeddingTable::grad_norm() const {
  if (!table_.has_grad()) throw StateError("label embeddings: no gradient has been accumulated");
  double acc = 0.0;
  for (Real g : table_.grad()) acc += static_cast<double>(g) * g;
  return std::sqrt(acc);
}

void LabelEmbeddingTable::collect(ModuleState& state, const std::string& prefix) {
  state.params.push_back({join_name(prefix, "table"), table_});
}

}  // namespace NFVG_PRECISION_NS
}  // namespace nfvg
