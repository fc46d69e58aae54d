// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "nfvg/conditioning.hpp"
#include "nfvg/glow.hpp"
#include "nfvg/training.hpp"
#include "suites.hpp"

using namespace nfvg;
using oracle::random_tensor;

TEST(Pyramid, FullScaleShapes) {
  Rng rng(1);
  PyramidNet p(19, 4, rng);
  const auto pyr = p.build(Tensor(Shape{1, 19, 64, 64}, Real(0.1)));
  ASSERT_EQ(pyr.depth(), 4u);
  const int sizes[] = {64, 32, 16, 8};
  for (int i = 0; i < 4; ++i) EXPECT_EQ(pyr.levels[i].shape(), (Shape{1, 19, sizes[i], sizes[i]}));
}

TEST(Pyramid, DeskScaleShapes) {
  Rng rng(2);
  PyramidNet p(19, 2, rng);
  const auto pyr = p.build(Tensor(Shape{2, 19, 16, 16}));
  EXPECT_EQ(pyr.levels[0].shape(), (Shape{2, 19, 16, 16}));
  EXPECT_EQ(pyr.levels[1].shape(), (Shape{2, 19, 8, 8}));
}

TEST(Pyramid, HalvingLawForEveryDepth) {
  for (int depth = 1; depth <= 5; ++depth) {
    Rng rng(depth);
    PyramidNet p(3, depth, rng);
    const auto pyr = p.build(Tensor(Shape{1, 3, 32, 32}));
    ASSERT_EQ(pyr.depth(), static_cast<std::size_t>(depth));
    for (int i = 0; i < depth; ++i) EXPECT_EQ(pyr.levels[i].shape(), (Shape{1, 3, 32 >> i, 32 >> i}));
  }
}

TEST(Pyramid, IndivisibleSizeIsShapeError) {
  Rng rng(3);
  PyramidNet p(3, 3, rng);
  EXPECT_THROW(p.build(Tensor(Shape{1, 3, 12, 10})), ShapeError);
  EXPECT_THROW(p.build(Tensor(Shape{1, 4, 16, 16})), ShapeError);
}

TEST(Pyramid, ZeroContextAndZeroWeightsGiveZeroLevels) {
  Rng rng(4);
  PyramidNet p(5, 3, rng, PyramidNet::Init::kZero);
  const auto pyr = p.build(Tensor::zeros(Shape{1, 5, 16, 16}));
  for (const auto& level : pyr.levels)
    for (Real v : level.data()) EXPECT_EQ(v, 0.0);
}

TEST(Pyramid, ZeroContextConditionedCouplingEqualsUnconditioned) {
  Rng rng(5);
  Coupling cond(4, 2, 8, CouplingMode::kAffine, rng);
  Coupling plain(4, 0, 8, CouplingMode::kAffine, rng);
  suite::randomize_coupling(cond, rng, 0.5);
  // Copy the x_a columns of the conditioned input convolution.
  const Shape ws = cond.in_weight().shape();  // (hidden, 2 + 2, 3, 3)
  for (int o = 0; o < ws.n; ++o)
    for (int i = 0; i < 2; ++i)
      for (int k = 0; k < 9; ++k) plain.in_weight().mutable_data()[(o * 2 + i) * 9 + k] = cond.in_weight().data()[(o * 4 + i) * 9 + k];
  std::copy(cond.in_bias().data().begin(), cond.in_bias().data().end(), plain.in_bias().mutable_data().begin());
  std::copy(cond.out_weight().data().begin(), cond.out_weight().data().end(), plain.out_weight().mutable_data().begin());
  std::copy(cond.out_bias().data().begin(), cond.out_bias().data().end(), plain.out_bias().mutable_data().begin());

  PyramidNet p(2, 2, rng, PyramidNet::Init::kZero);
  const auto pyr = p.build(Tensor::zeros(Shape{2, 2, 8, 8}));
  Tensor x = random_tensor(Shape{2, 4, 4, 4}, rng);
  // Level 1 has the coupling's spatial size.
  const FlowResult a = cond.forward(x, pyr.levels[1].shape().h == 4 ? pyr.levels[1] : Tensor());
  const FlowResult b = plain.forward(x, Tensor());
  EXPECT_LT(max_abs_diff(a.y, b.y), 1e-12);
  EXPECT_LT(max_abs_diff(a.logdet, b.logdet), 1e-12);
}

TEST(Pyramid, ZeroInjectionWeightsMakeConditionedGlowEqualUnconditioned) {
  GlowConfig base;
  base.num_blocks = 2;
  base.flows_per_block = 2;
  base.hidden = 8;
  base.height = base.width = 8;
  base.coupling = CouplingMode::kAffine;
  GlowConfig cond_cfg = base;
  cond_cfg.context_channels = 3;
  Rng rng(6);
  Glow plain(base, rng);
  Glow cond(cond_cfg, rng);
  suite::randomize_glow(plain, rng, 0.5);
  ModuleState ps, cs;
  plain.collect(ps, "");
  cond.collect(cs, "");
  ASSERT_EQ(ps.params.size(), cs.params.size());
  for (std::size_t i = 0; i < ps.params.size(); ++i) {
    const Tensor& src = ps.params[i].tensor;
    Tensor dst = cs.params[i].tensor;
    if (src.shape() == dst.shape()) {
      std::copy(src.data().begin(), src.data().end(), dst.mutable_data().begin());
      continue;
    }
    // conv_in weight: copy x_a columns, zero the context columns.
    const Shape s = src.shape(), d = dst.shape();
    auto out = dst.mutable_data();
    std::fill(out.begin(), out.end(), Real(0));
    for (int o = 0; o < s.n; ++o)
      for (int i = 0; i < s.c; ++i)
        for (int k = 0; k < 9; ++k) out[(o * d.c + i) * 9 + k] = src.data()[(o * s.c + i) * 9 + k];
  }
  for (std::size_t i = 0; i < ps.buffers.size(); ++i) cs.buffers[i].tensor.mutable_data()[0] = 1;

  PyramidNet p(3, 2, rng);
  Tensor x = suite::uniform_frames(Shape{3, 3, 8, 8}, rng);
  const auto pyr = p.build(random_tensor(Shape{3, 3, 8, 8}, rng));
  EXPECT_LT(max_abs_diff(cond.log_prob(x, &pyr), plain.log_prob(x)), 1e-5);
}

TEST(LabelEmbedding, LookupReturnsStoredRow) {
  Rng rng(7);
  LabelEmbeddingTable t(12, 3, 4, 4, rng);
  Tensor row = t.lookup(0);
  EXPECT_EQ(row.shape(), (Shape{1, 3, 4, 4}));
  for (std::size_t i = 0; i < row.numel(); ++i) EXPECT_EQ(row.data()[i], t.table().data()[i]);
  double sq = 0;
  for (Real v : t.table().data()) sq += v * v;
  EXPECT_NEAR(std::sqrt(sq / t.table().numel()), LabelEmbeddingTable::kInitStd, 0.01);
}

TEST(LabelEmbedding, OutOfRangeIsIndexError) {
  Rng rng(8);
  LabelEmbeddingTable t(4, 3, 2, 2, rng);
  EXPECT_THROW(t.lookup(4), IndexError);
  EXPECT_THROW(t.lookup(-1), IndexError);
}

TEST(LabelEmbedding, RepeatedLookupsShareGradientStorage) {
  Rng rng(9);
  LabelEmbeddingTable t(4, 3, 2, 2, rng);
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor a = t.lookup(2);
    Tensor b = t.lookup(2);
    EXPECT_EQ(max_abs_diff(a, b), 0.0);
    tape.backward(add(sum(a), sum(b)));
  }
  const std::size_t row = 12;
  for (std::size_t i = 0; i < t.table().numel(); ++i) EXPECT_EQ(t.table().grad()[i], i / row == 2 ? 2.0 : 0.0);
}

TEST(LabelEmbedding, GradNorm) {
  Rng rng(10);
  LabelEmbeddingTable none(3, 3, 2, 2, rng);
  EXPECT_THROW(none.grad_norm(), StateError);
  LabelEmbeddingTable t(201, 3, 8, 8, rng);
  t.table().zero_grad();
  t.table().mutable_grad();
  EXPECT_EQ(t.grad_norm(), 0.0);
  for (Real& g : t.table().mutable_grad()) g = 1;
  EXPECT_NEAR(t.grad_norm(), std::sqrt(201.0 * 3 * 8 * 8), 1e-9);
  EXPECT_NEAR(t.grad_norm(), 196.448, 1e-3);
}

TEST(LabelEmbedding, OneOptimizerStepMovesOnlyTheLookedUpRow) {
  Rng rng(11);
  LabelEmbeddingTable t(4, 3, 2, 2, rng);
  const std::vector<Real> before(t.table().data().begin(), t.table().data().end());
  Adam adam({{"table", t.table()}});
  {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(sum(square(t.lookup(1))));
  }
  adam.step(1e-2);
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (i / 12 == 1) {
      EXPECT_NE(t.table().data()[i], before[i]);
    } else {
      EXPECT_EQ(t.table().data()[i], before[i]);
    }
  }
}
