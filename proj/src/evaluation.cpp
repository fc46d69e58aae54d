// SPDX-License-Identifier: Apache-2.0
#include "nfvg/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace nfvg {
inline namespace NFVG_PRECISION_NS {

namespace fs = std::filesystem;

namespace {
constexpr std::uint64_t kEvalStream = 0x4556;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}
}  // namespace

EvalRow evaluate(VideoModel& model, const RunMeta& meta, const Corpus& corpus, Split split, std::uint64_t eval_seed) {
  const std::string corpus_hash = corpus.spec.hash();
  if (meta.corpus_hash != corpus_hash) {
    throw CompatibilityError("eval: checkpoint was trained on corpus " + meta.corpus_hash + " but " +
                             corpus.root.string() + " has hash " + corpus_hash);
  }
  const ModelConfig& cfg = model.config();
  if (corpus.spec.size != cfg.height || corpus.spec.size != cfg.width) {
    throw CompatibilityError("eval: corpus frames are " + std::to_string(corpus.spec.size) + "x" +
                             std::to_string(corpus.spec.size) + " but the model expects " +
                             std::to_string(cfg.height) + "x" + std::to_string(cfg.width));
  }
  const std::vector<VideoRecord> videos = corpus.load(split);
  if (videos.empty()) throw UsageError("eval: split " + to_string(split) + " is empty");

  model.set_training(false);
  double head = 0, tail = 0;
  std::size_t tail_frames = 0;
  for (std::size_t start = 0, b = 0; start < videos.size(); start += kEvalBatch, ++b) {
    std::vector<const VideoRecord*> batch;
    for (std::size_t i = start; i < std::min(videos.size(), start + kEvalBatch); ++i) batch.push_back(&videos[i]);
    Rng noise = make_rng(eval_seed, b, kEvalStream);
    std::vector<Tensor> frames, context;
    std::vector<int> labels;
    for (int t = 0; t < batch.front()->frames; ++t) {
      frames.push_back(frame_batch(batch, t, &noise));
      context.push_back(frame_batch(batch, t, nullptr));
    }
    for (const VideoRecord* v : batch) labels.push_back(v->label);
    const auto lp = model.log_probs(frames, context, labels);
    for (Real v : lp.head.data()) head += nats_per_dim(v, cfg.dims());
    for (const Tensor& t : lp.tail) {
      for (Real v : t.data()) tail += nats_per_dim(v, cfg.dims());
      tail_frames += t.numel();
    }
  }

  EvalRow row;
  row.variant = to_string(cfg.variant);
  row.ce_head_npd = head / static_cast<double>(videos.size());
  row.ce_tail_npd = tail_frames ? tail / static_cast<double>(tail_frames) : std::nan("");
  row.n_videos = static_cast<int>(videos.size());
  row.config_hash = meta.config_hash();
  row.split = split;
  return row;
}

std::string eval_header() { return "variant,ce_head_npd,ce_tail_npd,n_videos,config_hash,split"; }

std::string eval_row_csv(const EvalRow& r) {
  return r.variant + "," + num(r.ce_head_npd) + "," + num(r.ce_tail_npd) + "," + std::to_string(r.n_videos) + "," +
         r.config_hash + "," + to_string(r.split);
}

void append_eval_row(const fs::path& path, const EvalRow& row) {
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  if (fresh) out << eval_header() << "\n";
  out << eval_row_csv(row) << "\n";
}

AblationResult run_ablation(const Corpus& corpus, const AblationOptions& options, const fs::path& out_dir,
                            std::ostream* log) {
  fs::create_directories(out_dir);
  const std::vector<VideoRecord> train = corpus.load(Split::kTrain);
  AblationResult result;
  for (Variant v : kAllVariants) {
    const std::string name = to_string(v);
    try {
      ModelConfig cfg = options.model;
      cfg.variant = v;
      cfg.label_count = corpus.spec.label_count();
      TrainConfig tc = options.train;
      if (v == Variant::kInit && !options.trained_unconditioned) tc.max_steps = 0;
      VideoModel model(cfg);
      Trainer trainer(model, train, tc, corpus.spec.hash(), out_dir / name, log);
      if (log) *log << "ablate: training " << name << " for " << tc.max_steps << " steps\n";
      trainer.run();
      result.rows.push_back(evaluate(model, trainer.meta(), corpus, Split::kValidation));
      if (log) *log << "ablate: " << eval_row_csv(result.rows.back()) << "\n";
    } catch (const std::exception& e) {
      throw std::runtime_error("ablate: variant " + name + ": " + e.what());
    }
  }
  result.state_minus_prev_tail = result.rows[2].ce_tail_npd - result.rows[1].ce_tail_npd;

  std::ofstream table(out_dir / "ablation.csv");
  table << "variant,ce_head_npd,ce_tail_npd,config_hash\n";
  for (const auto& r : result.rows) {
    table << r.variant << "," << num(r.ce_head_npd) << "," << num(r.ce_tail_npd) << "," << r.config_hash << "\n";
  }
  std::ofstream findings(out_dir / "findings.txt");
  findings << "state_minus_prev_frame_tail_npd=" << num(result.state_minus_prev_tail) << "\n"
           << "state_better_than_prev_frame=" << (result.state_minus_prev_tail < 0 ? "yes" : "no") << "\n";
  return result;
}

}  // namespace NFVG_PRECISION_NS
}  // namespace nfvg
