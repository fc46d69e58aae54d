// SPDX-License-Identifier: Apache-2.0
//
// Context features injected into the coupling layers of every flow block.
#pragma once

#include <string>
#include <vector>

#include "nfvg/params.hpp"
#include "nfvg/tensor.hpp"

namespace nfvg {
inline namespace NFVG_PRECISION_NS {

// levels[i] has the spatial size of block i's input; channel count is constant.
struct ConditioningPyramid {
  std::vector<Tensor> levels;

  std::size_t depth() const { return levels.size(); }
};

// levels[0] is the context itself; every further level is a stride-2
// conv3x3 + ReLU of the previous one with the channel count preserved.
class PyramidNet {
 public:
  enum class Init { kRandom, kZero };

  PyramidNet(int channels, int num_levels, Rng& rng, Init init = Init::kRandom);

  ConditioningPyramid build(const Tensor& context) const;
  void collect(ModuleState& state, const std::string& prefix);

  int channels() const { return channels_; }
  int num_levels() const { return num_levels_; }
  Tensor& weight(int i) { return weights_.at(i); }

 private:
  int channels_;
  int num_levels_;
  std::vector<Tensor> weights_;  // num_levels - 1 downsampling convolutions
  std::vector<Tensor> biases_;
};

// Learned frame-shaped tensor per label.
class LabelEmbeddingTable {
 public:
  static constexpr double kInitStd = 0.05;

  LabelEmbeddingTable(int label_count, int channels, int height, int width, Rng& rng);

  int label_count() const { return table_.shape().n; }
  // (1, C, H, W), gradient-connected to the table.
  Tensor lookup(int label) const;
  // (len, C, H, W).
  Tensor lookup(std::span<const int> labels) const;
  // Euclidean norm of the accumulated gradient over the whole table.
  double grad_norm() const;

  void collect(ModuleState& state, const std::string& prefix);
  Tensor& table() { return table_; }
  const Tensor& table() const { return table_; }

 private:
  Tensor table_;  // (labels, C, H, W)
};

}  // namespace NFVG_PRECISION_NS
}  // namespace nfvg
