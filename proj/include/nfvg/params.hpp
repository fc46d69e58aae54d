// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "nfvg/tensor.hpp"

namespace nfvg {
inline namespace NFVG_PRECISION_NS {

using Rng = std::mt19937_64;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Parameter handles alias the module's storage, so writing through them
// (optimizer, checkpoint load) updates the module in place.
using ParamList = std::vector<NamedTensor>;

// Trainable parameters plus non-trainable state such as ActNorm init flags.
struct ModuleState {
  ParamList params;
  ParamList buffers;
};

inline std::string join_name(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "/" + name;
}

Tensor normal_parameter(Shape shape, double stddev, Rng& rng);
Tensor constant_parameter(Shape shape, Real value);

// Deterministic derived stream, e.g. per-step noise from (seed, step, tag).
Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0, std::uint64_t tag = 0);

}  // namespace NFVG_PRECISION_NS
}  // namespace nfvg
