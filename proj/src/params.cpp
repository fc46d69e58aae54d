// SPDX-License-Identifier: Apache-2.0
#include "nfvg/params.hpp"

namespace nfvg {
inline namespace NFVG_PRECISION_NS {

Tensor normal_parameter(Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<Real> values(shape.numel());
  for (Real& v : values) v = static_cast<Real>(dist(rng));
  return Tensor::parameter(shape, std::move(values));
}

Tensor constant_parameter(Shape shape, Real value) {
  return Tensor::parameter(shape, std::vector<Real>(shape.numel(), value));
}

Rng make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
  return Rng(seq);
}

}  // namespace NFVG_PRECISION_NS
}  // namespace nfvg
