// SPDX-License-Identifier: Apache-2.0
#include "nfvg/glow.hpp"

#include <cmath>

namespace nfvg {
inline namespace NFVG_PRECISION_NS {

void GlowConfig::validate() const {
  if (num_blocks < 1 || flows_per_block < 1 || hidden < 1 || channels < 1) {
    throw ShapeError("glow config: blocks, flows, hidden width and channels must be positive");
  }
  const int factor = 1 << num_blocks;
  if (height % factor != 0 || width % factor != 0) {
    throw ShapeError("glow config: frame " + std::to_string(height) + "x" + std::to_string(width) +
                     " is not divisible by 2^" + std::to_string(num_blocks) + " (blocks)");
  }
  if (context_channels < 0) throw ShapeError("glow config: negative context channel count");
}

GlowConfig GlowConfig::full_scale() {
  GlowConfig c;
  c.num_blocks = 4;
  c.flows_per_block = 32;
  c.hidden = 512;
  c.height = 64;
  c.width = 64;
  return c;
}

GlowConfig GlowConfig::desk_scale() { return GlowConfig{}; }

Glow::Glow(const GlowConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  int channels = config_.channels;
  for (int b = 0; b < config_.num_blocks; ++b) {
    const int squeezed = 4 * channels;
    std::vector<std::unique_ptr<FlowStep>> steps;
    for (int k = 0; k < config_.flows_per_block; ++k) {
      steps.push_back(std::make_unique<FlowStep>(squeezed, 4 * config_.context_channels, config_.hidden,
                                                 config_.coupling, rng));
    }
    blocks_.push_back(std::move(steps));
    channels = squeezed / 2;
  }
}

void Glow::check_input(const Tensor& x) const {
  const Shape& s = x.shape();
  if (s.c != config_.channels || s.h != config_.height || s.w != config_.width) {
    throw ShapeError("glow: input " + s.str() + " does not match configured frame " +
                     std::to_string(config_.channels) + "x" + std::to_string(config_.height) + "x" +
                     std::to_string(config_.width));
  }
}

std::vector<Tensor> Glow::block_contexts(const ConditioningPyramid* context, int batch) const {
  std::vector<Tensor> out(config_.num_blocks);
  if (!conditioned()) {
    if (context != nullptr) throw ShapeError("glow: context pyramid given to an unconditioned model");
    return out;
  }
  if (context == nullptr) throw ShapeError("glow: conditioned model called without a context pyramid");
  if (context->depth() != static_cast<std::size_t>(config_.num_blocks)) {
    throw ShapeError("glow: pyramid depth " + std::to_string(context->depth()) + " != block count " +
                     std::to_string(config_.num_blocks));
  }
  for (int b = 0; b < config_.num_blocks; ++b) {
    const Tensor& level = context->levels[b];
    const Shape& s = level.shape();
    const int expect_h = config_.height >> b;
    const int expect_w = config_.width >> b;
    if (s.n != batch || s.c != config_.context_channels || s.h != expect_h || s.w != expect_w) {
      throw ShapeError("glow: pyramid level " + std::to_string(b) + " has shape " + s.str() + ", expected " +
                       Shape{batch, config_.context_channels, expect_h, expect_w}.str());
    }
    out[b] = squeeze(level);
  }
  return out;
}

Glow::Encoded Glow::encode(const Tensor& x, const ConditioningPyramid* context) {
  check_input(x);
  const std::vector<Tensor> ctx = block_contexts(context, x.shape().n);
  Encoded out;
  out.logdet = zero_logdet();
  Tensor h = x;
  for (int b = 0; b < config_.num_blocks; ++b) {
    h = squeeze(h);
    for (auto& step : blocks_[b]) {
      FlowResult r = step->forward(h, ctx[b]);
      h = r.y;
      out.logdet = add_logdet(out.logdet, r.logdet);
    }
    if (b + 1 < config_.num_blocks) {
      SplitResult parts = split(h);
      out.z.entries.push_back(parts.factored);
      h = parts.kept;
    }
  }
  out.z.entries.push_back(h);
  return out;
}

Tensor Glow::decode(const LatentStack& z, const ConditioningPyramid* context) {
  if (z.entries.size() != static_cast<std::size_t>(config_.num_blocks)) {
    throw ShapeError("glow: latent stack has " + std::to_string(z.entries.size()) + " entries, expected " +
                     std::to_string(config_.num_blocks));
  }
  const int batch = z.entries.back().shape().n;
  const std::vector<Shape> shapes = latent_shapes(batch);
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (!(z.entries[i].shape() == shapes[i])) {
      throw ShapeError("glow: latent " + std::to_string(i) + " has shape " + z.entries[i].shape().str() +
                       ", expected " + shapes[i].str());
    }
  }
  const std::vector<Tensor> ctx = block_contexts(context, batch);
  Tensor h = z.entries.back();
  for (int b = config_.num_blocks - 1; b >= 0; --b) {
    if (b + 1 < config_.num_blocks) h = unsplit(h, z.entries[b]);
    for (auto it = blocks_[b].rbegin(); it != blocks_[b].rend(); ++it) h = (*it)->inverse(h, ctx[b]);
    h = unsqueeze(h);
  }
  return h;
}

Tensor Glow::log_prob(const Tensor& x, const ConditioningPyramid* context) {
  Encoded e = encode(x, context);
  Tensor lp = add_logdet(e.z.log_density(), e.logdet);
  if (!all_finite(lp.data())) throw NumericError("glow: log_prob is not finite");
  return lp;
}

std::vector<Shape> Glow::latent_shapes(int batch) const {
  std::vector<Shape> out;
  int c = config_.channels, h = config_.height, w = config_.width;
  for (int b = 0; b < config_.num_blocks; ++b) {
    c *= 4;
    h /= 2;
    w /= 2;
    if (b + 1 < config_.num_blocks) {
      out.push_back(Shape{batch, c / 2, h, w});
      c /= 2;
    }
  }
  out.push_back(Shape{batch, c, h, w});
  return out;
}

LatentStack Glow::draw_latents(int batch, double temperature, Rng& rng) const {
  if (temperature < 0) throw UsageError("sample: temperature must be non-negative");
  LatentStack z;
  std::normal_distribution<double> dist(0.0, 1.0);
  for (const Shape& s : latent_shapes(batch)) {
    Tensor t = Tensor::zeros(s);
    if (temperature > 0) {
      for (Real& v : t.mutable_data()) v = static_cast<Real>(temperature * dist(rng));
    }
    z.entries.push_back(t);
  }
  return z;
}

Tensor Glow::sample(int batch, double temperature, Rng& rng, const ConditioningPyramid* context) {
  return decode(draw_latents(batch, temperature, rng), context);
}

void Glow::collect(ModuleState& state, const std::string& prefix) {
  for (std::size_t b = 0; b < blocks_.size(); ++b)
    for (std::size_t k = 0; k < blocks_[b].size(); ++k)
      blocks_[b][k]->collect(state, join_name(prefix, "block" + std::to_string(b) + "/step" + std::to_string(k)));
}

void Glow::set_training(bool on) {
  for (auto& block : blocks_)
    for (auto& step : block) step->set_training(on);
}

}  // namespace NFVG_PRECISION_NS
}  // namespace nfvg
