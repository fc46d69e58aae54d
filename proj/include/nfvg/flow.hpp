// SPDX-License-Identifier: Apache-2.0
//
// Invertible layers of a Glow-style flow. Each layer maps x to y and reports
// the log|det| of its Jacobian per sample so that
//   log q(x) = log N(z; 0, I) + sum of layer log-dets.
#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "nfvg/params.hpp"
#include "nfvg/tensor.hpp"

namespace nfvg {
inline namespace NFVG_PRECISION_NS {

// logdet has shape (1,1,1,1) when identical for every sample, else (N,1,1,1).
struct FlowResult {
  Tensor y;
  Tensor logdet;
};

// Adds two log-det tensors where either may be the shared (1,1,1,1) form.
Tensor add_logdet(const Tensor& a, const Tensor& b);
Tensor zero_logdet();

class FlowLayer {
 public:
  virtual ~FlowLayer() = default;
  // context is undefined for unconditioned layers.
  virtual FlowResult forward(const Tensor& x, const Tensor& context) = 0;
  virtual Tensor inverse(const Tensor& y, const Tensor& context) = 0;
  virtual void collect(ModuleState& state, const std::string& prefix) = 0;
  virtual void set_training(bool) {}
};

// Per-channel affine map y = exp(log_scale) * (x + bias), initialised from the
// statistics of the first batch seen in training mode.
class ActNorm final : public FlowLayer {
 public:
  // Channels whose initialisation-batch std falls below this keep unit scale.
  static constexpr double kMinInitStd = 1e-4;

  explicit ActNorm(int channels);

  FlowResult forward(const Tensor& x, const Tensor& context = {}) override;
  Tensor inverse(const Tensor& y, const Tensor& context = {}) override;
  void collect(ModuleState& state, const std::string& prefix) override;
  void set_training(bool on) override { training_ = on; }

  bool initialized() const { return flag_.data()[0] != 0; }
  void initialize_from(const Tensor& x);
  // Marks the layer usable with whatever parameters it currently holds.
  void mark_initialized() { flag_.mutable_data()[0] = 1; }

  Tensor& log_scale() { return log_scale_; }
  Tensor& bias() { return bias_; }

 private:
  void check(const Tensor& x) const;

  int channels_;
  Tensor log_scale_;  // (1,C,1,1)
  Tensor bias_;       // (1,C,1,1)
  Tensor flag_;       // (1,1,1,1): 1 once initialised
  bool training_ = false;
};

// Channel mixing by a learned CxC matrix shared over all positions.
class Inv1x1Conv final : public FlowLayer {
 public:
  // Weight starts as a random rotation.
  Inv1x1Conv(int channels, Rng& rng);

  FlowResult forward(const Tensor& x, const Tensor& context = {}) override;
  Tensor inverse(const Tensor& y, const Tensor& context = {}) override;
  void collect(ModuleState& state, const std::string& prefix) override;

  Tensor& weight() { return weight_; }

 private:
  int channels_;
  Tensor weight_;  // (C,C,1,1)
};

enum class CouplingMode { kAdditive, kAffine };

std::string to_string(CouplingMode mode);
CouplingMode coupling_mode_from_string(const std::string& s);

// Keeps the first half of the channels and shifts (additive) or scales and
// shifts (affine) the second half by a function of the first half and the
// optional context. The function is conv3x3 -> ReLU -> conv3x3 with the last
// convolution zero-initialised.
class Coupling final : public FlowLayer {
 public:
  // Affine log-scales are squashed to [-kScaleBound, kScaleBound].
  static constexpr double kScaleBound = 2.0;

  Coupling(int channels, int context_channels, int hidden, CouplingMode mode, Rng& rng);

  FlowResult forward(const Tensor& x, const Tensor& context = {}) override;
  Tensor inverse(const Tensor& y, const Tensor& context = {}) override;
  void collect(ModuleState& state, const std::string& prefix) override;

  CouplingMode mode() const { return mode_; }
  int context_channels() const { return context_channels_; }
  Tensor& in_weight() { return w1_; }
  Tensor& in_bias() { return b1_; }
  Tensor& out_weight() { return w2_; }
  Tensor& out_bias() { return b2_; }

 private:
  void check(const Tensor& x, const Tensor& context) const;
  // Returns (shift, log_scale); log_scale undefined in additive mode.
  std::pair<Tensor, Tensor> transform(const Tensor& xa, const Tensor& context) const;

  int channels_;
  int context_channels_;
  CouplingMode mode_;
  Tensor w1_, b1_, w2_, b2_;
};

// ActNorm -> invertible 1x1 conv -> coupling.
class FlowStep final : public FlowLayer {
 public:
  FlowStep(int channels, int context_channels, int hidden, CouplingMode mode, Rng& rng);

  FlowResult forward(const Tensor& x, const Tensor& context) override;
  Tensor inverse(const Tensor& y, const Tensor& context) override;
  void collect(ModuleState& state, const std::string& prefix) override;
  void set_training(bool on) override { actnorm_.set_training(on); }

  ActNorm& actnorm() { return actnorm_; }
  Inv1x1Conv& mixing() { return mixing_; }
  Coupling& coupling() { return coupling_; }

 private:
  ActNorm actnorm_;
  Inv1x1Conv mixing_;
  Coupling coupling_;
};

// Space-to-depth and its inverse; volume preserving.
Tensor squeeze(const Tensor& x);
Tensor unsqueeze(const Tensor& y);

struct SplitResult {
  Tensor kept;
  Tensor factored;
};

// Channel halving; the factored half is scored under N(0, I).
SplitResult split(const Tensor& x);
Tensor unsplit(const Tensor& kept, const Tensor& factored);

// Gaussian-scored tensors emitted by the multi-scale architecture, in the
// order they leave the flow.
struct LatentStack {
  std::vector<Tensor> entries;

  std::size_t total_elements_per_sample() const;
  Tensor log_density() const;  // (N,1,1,1) standard-normal log density
};

// Standard normal log density summed per sample: (N,1,1,1).
Tensor standard_normal_log_density(const Tensor& z);

}  // namespace NFVG_PRECISION_NS
}  // namespace nfvg
