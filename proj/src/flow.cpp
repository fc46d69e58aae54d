// SPDX-License-Identifier: Apache-2.0
#include "nfvg/flow.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "nfvg/linalg.hpp"

namespace nfvg {
inline namespace NFVG_PRECISION_NS {

Tensor zero_logdet() { return Tensor::scalar(0); }

Tensor add_logdet(const Tensor& a, const Tensor& b) {
  if (a.shape().n >= b.shape().n) return add(a, b);
  return add(b, a);
}

// ---------------------------------------------------------------------------
// ActNorm

ActNorm::ActNorm(int channels)
    : channels_(channels),
      log_scale_(constant_parameter(Shape{1, channels, 1, 1}, 0)),
      bias_(constant_parameter(Shape{1, channels, 1, 1}, 0)),
      flag_(Shape{}, Real(0)) {}

void ActNorm::check(const Tensor& x) const {
  if (x.shape().c != channels_) {
    throw ShapeError("actnorm: expected " + std::to_string(channels_) + " channels, got input " +
                     x.shape().str());
  }
}

void ActNorm::initialize_from(const Tensor& x) {
  check(x);
  const Shape& s = x.shape();
  const std::size_t plane = s.plane();
  const double count = static_cast<double>(s.n) * plane;
  auto ls = log_scale_.mutable_data();
  auto b = bias_.mutable_data();
  for (int c = 0; c < s.c; ++c) {
    double mean = 0.0;
    for (int n = 0; n < s.n; ++n)
      for (std::size_t p = 0; p < plane; ++p) mean += x.data()[(n * s.c + c) * plane + p];
    mean /= count;
    double var = 0.0;
    for (int n = 0; n < s.n; ++n)
      for (std::size_t p = 0; p < plane; ++p) {
        const double d = x.data()[(n * s.c + c) * plane + p] - mean;
        var += d * d;
      }
    const double std = std::sqrt(var / count);
    b[c] = static_cast<Real>(-mean);
    ls[c] = std >= kMinInitStd ? static_cast<Real>(-std::log(std)) : Real(0);
  }
  mark_initialized();
}

FlowResult ActNorm::forward(const Tensor& x, const Tensor&) {
  check(x);
  if (!initialized()) {
    if (!training_) throw StateError("actnorm: forward in inference mode before data-dependent init");
    initialize_from(x);
  }
  Tensor y = mul(add(x, bias_), exp(log_scale_));
  Tensor logdet = scale(sum(log_scale_), static_cast<Real>(x.shape().plane()));
  return {y, logdet};
}

Tensor ActNorm::inverse(const Tensor& y, const Tensor&) {
  check(y);
  if (!initialized()) throw StateError("actnorm: inverse before data-dependent init");
  return sub(mul(y, exp(scale(log_scale_, -1))), bias_);
}

void ActNorm::collect(ModuleState& state, const std::string& prefix) {
  state.params.push_back({join_name(prefix, "log_scale"), log_scale_});
  state.params.push_back({join_name(prefix, "bias"), bias_});
  state.buffers.push_back({join_name(prefix, "initialized"), flag_});
}

// ---------------------------------------------------------------------------
// Invertible 1x1 convolution

Inv1x1Conv::Inv1x1Conv(int channels, Rng& rng) : channels_(channels) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::MatrixXd g(channels, channels);
  for (int i = 0; i < channels; ++i)
    for (int j = 0; j < channels; ++j) g(i, j) = dist(rng);
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
  std::vector<Real> values(static_cast<std::size_t>(channels) * channels);
  for (int i = 0; i < channels; ++i)
    for (int j = 0; j < channels; ++j) values[i * channels + j] = static_cast<Real>(q(i, j));
  weight_ = Tensor::parameter(Shape{channels, channels, 1, 1}, std::move(values));
}

FlowResult Inv1x1Conv::forward(const Tensor& x, const Tensor&) {
  if (x.shape().c != channels_) {
    throw ShapeError("inv1x1: expected " + std::to_string(channels_) + " channels, got input " +
                     x.shape().str());
  }
  Tensor lad;
  try {
    lad = logabsdet(weight_);
  } catch (const SingularMatrixError& e) {
    throw NonInvertibleWeightError(std::string("inv1x1: non-invertible weight: ") + e.what());
  }
  if (!std::isfinite(lad.item())) throw NonInvertibleWeightError("inv1x1: log|det| of weight is not finite");
  Tensor y = conv2d(x, weight_, Tensor(), 1, 0);
  return {y, scale(lad, static_cast<Real>(x.shape().plane()))};
}

Tensor Inv1x1Conv::inverse(const Tensor& y, const Tensor&) {
  std::vector<double> w(weight_.data().begin(), weight_.data().end());
  linalg::Matrix inv;
  try {
    inv = linalg::invert(linalg::Matrix(channels_, std::move(w)));
  } catch (const SingularMatrixError& e) {
    throw NonInvertibleWeightError(std::string("inv1x1: non-invertible weight: ") + e.what());
  }
  std::vector<Real> values(inv.values().begin(), inv.values().end());
  const Tensor kernel(Shape{channels_, channels_, 1, 1}, std::move(values));
  return conv2d(y, kernel, Tensor(), 1, 0);
}

void Inv1x1Conv::collect(ModuleState& state, const std::string& prefix) {
  state.params.push_back({join_name(prefix, "weight"), weight_});
}

// ---------------------------------------------------------------------------
// Coupling

std::string to_string(CouplingMode mode) {
  return mode == CouplingMode::kAdditive ? "additive" : "affine";
}

CouplingMode coupling_mode_from_string(const std::string& s) {
  if (s == "additive") return CouplingMode::kAdditive;
  if (s == "affine") return CouplingMode::kAffine;
  throw UsageError("unknown coupling mode '" + s + "' (expected additive or affine)");
}

Coupling::Coupling(int channels, int context_channels, int hidden, CouplingMode mode, Rng& rng)
    : channels_(channels), context_channels_(context_channels), mode_(mode) {
  if (channels % 2 != 0) {
    throw ShapeError("coupling: channel count " + std::to_string(channels) + " must be even");
  }
  const int in = channels / 2 + context_channels;
  const int out = mode == CouplingMode::kAdditive ? channels / 2 : channels;
  w1_ = normal_parameter(Shape{hidden, in, 3, 3}, 1.0 / std::sqrt(9.0 * in), rng);
  b1_ = constant_parameter(Shape{1, hidden, 1, 1}, 0);
  w2_ = constant_parameter(Shape{out, hidden, 3, 3}, 0);
  b2_ = constant_parameter(Shape{1, out, 1, 1}, 0);
}

void Coupling::check(const Tensor& x, const Tensor& context) const {
  const Shape& s = x.shape();
  if (s.c % 2 != 0) throw ShapeError("coupling: odd channel count in input " + s.str());
  if (s.c != channels_) {
    throw ShapeError("coupling: expected " + std::to_string(channels_) + " channels, got input " + s.str());
  }
  if (context_channels_ == 0) {
    if (context.defined()) throw ShapeError("coupling: context " + context.shape().str() + " given to an unconditioned layer");
    return;
  }
  if (!context.defined()) throw ShapeError("coupling: conditioned layer called without context");
  const Shape& cs = context.shape();
  if (cs.n != s.n || cs.h != s.h || cs.w != s.w || cs.c != context_channels_) {
    throw ShapeError("coupling: context " + cs.str() + " does not match input " + s.str() + " with " +
                     std::to_string(context_channels_) + " context channels");
  }
}

std::pair<Tensor, Tensor> Coupling::transform(const Tensor& xa, const Tensor& context) const {
  const Tensor in = context.defined() ? concat_channels(xa, context) : xa;
  const Tensor h = relu(conv2d(in, w1_, b1_, 1, 1));
  const Tensor out = conv2d(h, w2_, b2_, 1, 1);
  if (mode_ == CouplingMode::kAdditive) return {out, Tensor()};
  const int half = channels_ / 2;
  const Tensor shift = slice_channels(out, 0, half);
  const Tensor raw = slice_channels(out, half, channels_);
  const Real bound = static_cast<Real>(kScaleBound);
  const Tensor log_s = scale(tanh(scale(raw, 1 / bound)), bound);
  return {shift, log_s};
}

FlowResult Coupling::forward(const Tensor& x, const Tensor& context) {
  check(x, context);
  const int half = channels_ / 2;
  const Tensor xa = slice_channels(x, 0, half);
  const Tensor xb = slice_channels(x, half, channels_);
  auto [shift, log_s] = transform(xa, context);
  if (mode_ == CouplingMode::kAdditive) {
    return {concat_channels(xa, add(xb, shift)), zero_logdet()};
  }
  const Tensor yb = add(mul(xb, exp(log_s)), shift);
  return {concat_channels(xa, yb), sum_per_sample(log_s)};
}

Tensor Coupling::inverse(const Tensor& y, const Tensor& context) {
  check(y, context);
  const int half = channels_ / 2;
  const Tensor ya = slice_channels(y, 0, half);
  const Tensor yb = slice_channels(y, half, channels_);
  auto [shift, log_s] = transform(ya, context);
  if (mode_ == CouplingMode::kAdditive) return concat_channels(ya, sub(yb, shift));
  return concat_channels(ya, mul(sub(yb, shift), exp(scale(log_s, -1))));
}

void Coupling::collect(ModuleState& state, const std::string& prefix) {
  state.params.push_back({join_name(prefix, "conv_in/weight"), w1_});
  state.params.push_back({join_name(prefix, "conv_in/bias"), b1_});
  state.params.push_back({join_name(prefix, "conv_out/weight"), w2_});
  state.params.push_back({join_name(prefix, "conv_out/bias"), b2_});
}

// ---------------------------------------------------------------------------
// FlowStep

FlowStep::FlowStep(int channels, int context_channels, int hidden, CouplingMode mode, Rng& rng)
    : actnorm_(channels), mixing_(channels, rng), coupling_(channels, context_channels, hidden, mode, rng) {}

FlowResult FlowStep::forward(const Tensor& x, const Tensor& context) {
  FlowResult a = actnorm_.forward(x);
  FlowResult b = mixing_.forward(a.y);
  FlowResult c = coupling_.forward(b.y, context);
  return {c.y, add_logdet(add_logdet(a.logdet, b.logdet), c.logdet)};
}

Tensor FlowStep::inverse(const Tensor& y, const Tensor& context) {
  return actnorm_.inverse(mixing_.inverse(coupling_.inverse(y, context)));
}

void FlowStep::collect(ModuleState& state, const std::string& prefix) {
  actnorm_.collect(state, join_name(prefix, "actnorm"));
  mixing_.collect(state, join_name(prefix, "inv1x1"));
  coupling_.collect(state, join_name(prefix, "coupling"));
}

// ---------------------------------------------------------------------------

Tensor squeeze(const Tensor& x) { return space_to_depth(x); }
Tensor unsqueeze(const Tensor& y) { return depth_to_space(y); }

SplitResult split(const Tensor& x) {
  const Shape& s = x.shape();
  if (s.c % 2 != 0) throw ShapeError("split: odd channel count in input " + s.str());
  return {slice_channels(x, 0, s.c / 2), slice_channels(x, s.c / 2, s.c)};
}

Tensor unsplit(const Tensor& kept, const Tensor& factored) { return concat_channels(kept, factored); }

Tensor standard_normal_log_density(const Tensor& z) {
  const double per_dim = -0.5 * std::log(2.0 * std::numbers::pi);
  return add_scalar(scale(sum_per_sample(square(z)), Real(-0.5)),
                    static_cast<Real>(per_dim * static_cast<double>(z.shape().sample())));
}

std::size_t LatentStack::total_elements_per_sample() const {
  std::size_t total = 0;
  for (const Tensor& t : entries) total += t.shape().sample();
  return total;
}

Tensor LatentStack::log_density() const {
  if (entries.empty()) throw StateError("LatentStack: empty stack");
  Tensor acc = standard_normal_log_density(entries.front());
  for (std::size_t i = 1; i < entries.size(); ++i) acc = add(acc, standard_normal_log_density(entries[i]));
  return acc;
}

}  // namespace NFVG_PRECISION_NS
}  // namespace nfvg
