// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "nfvg/evaluation.hpp"
#include "tmpdir.hpp"

using namespace nfvg;
namespace fs = std::filesystem;

namespace {

CorpusSpec small_spec(std::uint64_t seed = 4) {
  CorpusSpec s;
  s.num_videos = 40;
  s.frames = 3;
  s.size = 8;
  s.seed = seed;
  s.train_fraction = 0.9;
  return s;
}

ModelConfig small_model(Variant v) {
  ModelConfig c;
  c.variant = v;
  c.num_blocks = 2;
  c.flows_per_block = 2;
  c.hidden = 8;
  c.height = c.width = 8;
  c.state_channels = 4;
  c.processor_hidden = 8;
  return c;
}

TrainConfig small_train(long steps) {
  TrainConfig t;
  t.lr = 5e-3;
  t.batch_size = 4;
  t.max_steps = steps;
  t.checkpoint_interval = 10;
  t.seed = 2;
  return t;
}

std::vector<std::string> lines(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST(Evaluate, DeterministicAndOnValidationSplit) {
  TempDir d("eval_det");
  const Corpus corpus = generate_corpus(small_spec(), d / "data");
  VideoModel m(small_model(Variant::kState));
  Trainer trainer(m, corpus.load(Split::kTrain), small_train(5), corpus.spec.hash());
  trainer.run();
  const EvalRow a = evaluate(m, trainer.meta(), corpus, Split::kValidation);
  const EvalRow b = evaluate(m, trainer.meta(), corpus, Split::kValidation);
  EXPECT_EQ(eval_row_csv(a), eval_row_csv(b));
  EXPECT_EQ(a.n_videos, 4);
  EXPECT_EQ(a.variant, "state");
  EXPECT_EQ(a.split, Split::kValidation);
  EXPECT_EQ(a.config_hash, trainer.meta().config_hash());
  EXPECT_TRUE(std::isfinite(a.ce_head_npd));
  EXPECT_TRUE(std::isfinite(a.ce_tail_npd));
  const EvalRow other_seed = evaluate(m, trainer.meta(), corpus, Split::kValidation, 1);
  EXPECT_NE(other_seed.ce_head_npd, a.ce_head_npd);
  EXPECT_NEAR(other_seed.ce_head_npd, a.ce_head_npd, 0.05);
}

TEST(Evaluate, TrainSplitRowIsMarked) {
  TempDir d("eval_train");
  const Corpus corpus = generate_corpus(small_spec(), d / "data");
  VideoModel m(small_model(Variant::kInit));
  m.mark_untrained_initialized();
  const RunMeta meta{m.config(), small_train(0), corpus.spec.hash()};
  const EvalRow r = evaluate(m, meta, corpus, Split::kTrain);
  EXPECT_EQ(r.n_videos, 36);
  EXPECT_EQ(r.split, Split::kTrain);
  EXPECT_TRUE(eval_row_csv(r).ends_with(",train"));
}

// Independent per-video average of the per-frame log densities, scored at bin
// centres through the model API, against the evaluator at its noise draw.
TEST(Evaluate, UntrainedIdentityModelMatchesGaussianFormula) {
  TempDir d("eval_formula");
  const Corpus corpus = generate_corpus(small_spec(), d / "data");
  VideoModel m(small_model(Variant::kInit));
  m.mark_untrained_initialized();
  const RunMeta meta{m.config(), small_train(0), corpus.spec.hash()};
  const EvalRow r = evaluate(m, meta, corpus, Split::kValidation);
  // Identity flow: -log p(x) / d = 0.5 log 2pi + mean(x^2) / 2, x within one
  // bin of the centre; bound the effect of the dequantisation offset.
  double head = 0;
  const auto videos = corpus.load(Split::kValidation);
  for (const auto& v : videos) {
    double sq = 0;
    for (std::uint8_t p : v.frame(0)) {
      const double x = pixel_to_model(p, 0.5);
      sq += x * x;
    }
    head += 0.5 * std::log(2 * std::numbers::pi) + 0.5 * sq / v.frame_size() + std::log(256.0);
  }
  head /= videos.size();
  EXPECT_NEAR(r.ce_head_npd, head, 2.0 / 256);
}

TEST(Evaluate, MismatchedCorpusIsCompatibilityError) {
  TempDir d("eval_compat");
  const Corpus corpus = generate_corpus(small_spec(), d / "a");
  const Corpus other = generate_corpus(small_spec(5), d / "b");
  VideoModel m(small_model(Variant::kInit));
  m.mark_untrained_initialized();
  const RunMeta meta{m.config(), small_train(0), corpus.spec.hash()};
  EXPECT_THROW(evaluate(m, meta, other, Split::kValidation), CompatibilityError);
  CorpusSpec big = small_spec();
  big.size = 16;
  const Corpus sized = generate_corpus(big, d / "c");
  const RunMeta sized_meta{m.config(), small_train(0), sized.spec.hash()};
  EXPECT_THROW(evaluate(m, sized_meta, sized, Split::kValidation), CompatibilityError);
}

TEST(Evaluate, CsvAppendWritesHeaderOnce) {
  TempDir d("eval_csv");
  EvalRow r;
  r.variant = "state";
  r.ce_head_npd = 1.5;
  r.ce_tail_npd = 2.25;
  r.n_videos = 10;
  r.config_hash = "deadbeef";
  append_eval_row(d / "e.csv", r);
  append_eval_row(d / "e.csv", r);
  const auto l = lines(d / "e.csv");
  ASSERT_EQ(l.size(), 3u);
  EXPECT_EQ(l[0], "variant,ce_head_npd,ce_tail_npd,n_videos,config_hash,split");
  EXPECT_EQ(l[1], "state,1.500000,2.250000,10,deadbeef,val");
  EXPECT_EQ(l[2], l[1]);
}

TEST(Ablation, FourRowsInOrderWithInitDominated) {
  TempDir d("ablate");
  const Corpus corpus = generate_corpus(small_spec(), d / "data");
  AblationOptions opt;
  opt.model = small_model(Variant::kState);
  opt.train = small_train(20);
  const AblationResult res = run_ablation(corpus, opt, d / "out");
  ASSERT_EQ(res.rows.size(), 4u);
  const char* order[] = {"init", "prev_frame", "state", "state_label"};
  for (int i = 0; i < 4; ++i) EXPECT_EQ(res.rows[i].variant, order[i]);
  for (int i = 1; i < 4; ++i) {
    EXPECT_LT(res.rows[i].ce_head_npd, res.rows[0].ce_head_npd) << order[i];
    EXPECT_LT(res.rows[i].ce_tail_npd, res.rows[0].ce_tail_npd) << order[i];
  }
  EXPECT_DOUBLE_EQ(res.state_minus_prev_tail, res.rows[2].ce_tail_npd - res.rows[1].ce_tail_npd);
  const auto table = lines(d / "out" / "ablation.csv");
  ASSERT_EQ(table.size(), 5u);
  EXPECT_EQ(table[0], "variant,ce_head_npd,ce_tail_npd,config_hash");
  for (int i = 0; i < 4; ++i) EXPECT_TRUE(table[i + 1].starts_with(std::string(order[i]) + ","));
  const auto findings = lines(d / "out" / "findings.txt");
  ASSERT_EQ(findings.size(), 2u);
  EXPECT_TRUE(findings[0].starts_with("state_minus_prev_frame_tail_npd="));
  for (const char* v : order) EXPECT_TRUE(fs::exists(d / "out" / v / "final.nfvg")) << v;
  EXPECT_EQ(load_model(d / "out" / "init" / "final.nfvg").checkpoint.step, 0u);
  EXPECT_EQ(load_model(d / "out" / "state" / "final.nfvg").checkpoint.step, 20u);
  EXPECT_TRUE(fs::exists(d / "out" / "state_label" / "lemb_grad_norm.csv"));
}
