// SPDX-License-Identifier: Apache-2.0
//
// nfvg: corpus generation, training, evaluation, ablation and sampling.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "nfvg/evaluation.hpp"
#include "nfvg/training.hpp"

namespace fs = std::filesystem;
using namespace nfvg;

namespace {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

// {"model": {...}, "train": {...}}; absent keys keep their defaults.
RunConfig read_run_config(const std::string& path) {
  RunConfig rc;
  if (path.empty()) return rc;
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config " + path + ": " + e.what());
  }
  if (j.contains("model")) rc.model = ModelConfig::from_json(j["model"]);
  if (j.contains("train")) rc.train = TrainConfig::from_json(j["train"]);
  return rc;
}

struct TrainFlags {
  std::string data, variant = "state", config, out;
  std::optional<long> max_steps, checkpoint_interval, nan_inject_step;
  std::optional<int> overfit_video, batch_size, hidden;
  std::optional<double> lr, clip;
  std::optional<std::uint64_t> seed;
  bool wall_clock = false;
};

void apply(const TrainFlags& f, RunConfig& rc) {
  if (f.max_steps) rc.train.max_steps = *f.max_steps;
  if (f.checkpoint_interval) rc.train.checkpoint_interval = *f.checkpoint_interval;
  if (f.nan_inject_step) rc.train.nan_inject_step = *f.nan_inject_step;
  if (f.batch_size) rc.train.batch_size = *f.batch_size;
  if (f.hidden) rc.model.hidden = *f.hidden;
  if (f.lr) rc.train.lr = *f.lr;
  if (f.clip) rc.train.clip = *f.clip;
  if (f.seed) rc.train.seed = rc.model.seed = *f.seed;
  rc.train.wall_clock = f.wall_clock;
}

void add_train_options(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--config", f.config, "JSON file with \"model\" and \"train\" sections");
  cmd->add_option("--max-steps", f.max_steps, "Optimizer steps");
  cmd->add_option("--lr", f.lr, "Adam learning rate");
  cmd->add_option("--batch-size", f.batch_size, "Videos per batch");
  cmd->add_option("--clip", f.clip, "Global gradient-norm clip threshold");
  cmd->add_option("--checkpoint-interval", f.checkpoint_interval, "Steps between checkpoints");
  cmd->add_option("--hidden", f.hidden, "Coupling network width");
  cmd->add_option("--seed", f.seed, "Seed for initialisation, data order and noise");
  cmd->add_flag("--wall-clock", f.wall_clock, "Record step time in wall_ms (breaks byte-reproducibility)");
}

int cmd_make_data(CorpusSpec spec, const std::string& labels, const std::string& out) {
  spec.labels = label_scheme_from_string(labels);
  const Corpus c = generate_corpus(spec, out);
  std::size_t train = 0;
  for (const auto& r : c.rows) train += r.split == Split::kTrain;
  std::cout << "wrote " << c.rows.size() << " videos (" << train << " train, " << c.rows.size() - train
            << " val) to " << out << " corpus_hash=" << spec.hash() << "\n";
  return 0;
}

int cmd_train(const TrainFlags& f) {
  RunConfig rc = read_run_config(f.config);
  rc.model.variant = variant_from_string(f.variant);
  apply(f, rc);
  const Corpus corpus = load_corpus(f.data);
  rc.model.height = rc.model.width = corpus.spec.size;
  rc.model.label_count = corpus.spec.label_count();
  rc.model.validate();

  std::vector<VideoRecord> data;
  if (f.overfit_video) {
    VideoRecord v = corpus.load_video(*f.overfit_video);
    data.push_back(std::move(v));
  } else {
    data = corpus.load(Split::kTrain);
  }
  VideoModel model(rc.model);
  Trainer trainer(model, std::move(data), rc.train, corpus.spec.hash(), f.out, &std::cerr);
  std::cerr << "train: variant=" << f.variant << " config_hash=" << trainer.meta().config_hash() << "\n";
  long every = std::max<long>(1, rc.train.max_steps / 20);
  auto steps = trainer.run([&](const StepMetrics& m) {
    if (m.step % every == 0 || m.step + 1 == rc.train.max_steps) std::cerr << metrics_row(m) << "\n";
  });
  std::cout << "final checkpoint " << (fs::path(f.out) / "final.nfvg").string() << " after " << trainer.steps()
            << " steps, rollbacks=" << trainer.rollbacks() << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data, const std::string& split_name,
             const std::string& out, std::uint64_t seed) {
  const Split split = split_from_string(split_name);
  LoadedModel lm = load_model(checkpoint);
  const Corpus corpus = load_corpus(data);
  const EvalRow row = evaluate(*lm.model, lm.meta, corpus, split, seed);
  std::cout << eval_header() << "\n" << eval_row_csv(row) << "\n";
  if (!out.empty()) append_eval_row(out, row);
  return 0;
}

int cmd_ablate(const TrainFlags& f, bool trained_unconditioned) {
  RunConfig rc = read_run_config(f.config);
  apply(f, rc);
  const Corpus corpus = load_corpus(f.data);
  rc.model.height = rc.model.width = corpus.spec.size;
  AblationOptions opt{rc.model, rc.train, trained_unconditioned};
  const AblationResult r = run_ablation(corpus, opt, f.out, &std::cerr);
  std::cout << "variant,ce_head_npd,ce_tail_npd,config_hash\n";
  for (const auto& row : r.rows) {
    std::printf("%s,%.6f,%.6f,%s\n", row.variant.c_str(), row.ce_head_npd, row.ce_tail_npd, row.config_hash.c_str());
  }
  std::printf("state - prev_frame tail CE: %+.6f nats/dim\n", r.state_minus_prev_tail);
  return 0;
}

int cmd_sample(const std::string& checkpoint, std::optional<int> label, int frames, double temperature,
               std::uint64_t seed, const std::string& out) {
  LoadedModel lm = load_model(checkpoint);
  const VideoRecord video = generate_video(*lm.model, label, frames, temperature, seed);
  fs::create_directories(out);
  write_video(fs::path(out) / "sample.nfvv", video);
  const auto files = export_frames(video, out);
  std::cout << "wrote sample.nfvv and " << files.size() << " frames to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional Glow next-frame video generation"};
  app.require_subcommand(1);

  CorpusSpec spec;
  std::string labels = "shape_direction", data_out;
  auto* make = app.add_subcommand("make-data", "Generate the synthetic sprite corpus");
  make->add_option("--videos", spec.num_videos, "Number of videos")->capture_default_str();
  make->add_option("--frames", spec.frames, "Frames per video")->capture_default_str();
  make->add_option("--size", spec.size, "Frame height and width")->capture_default_str();
  make->add_option("--labels", labels, "shape_direction, direction or shape")->capture_default_str();
  make->add_option("--seed", spec.seed, "Corpus seed")->capture_default_str();
  make->add_option("--train-fraction", spec.train_fraction, "Training split fraction")->capture_default_str();
  make->add_option("--out", data_out, "Output directory")->required();

  TrainFlags tf;
  auto* train = app.add_subcommand("train", "Train one variant");
  train->add_option("--data", tf.data, "Corpus directory")->required();
  train->add_option("--variant", tf.variant, "init, prev_frame, state or state_label")->capture_default_str();
  train->add_option("--out", tf.out, "Run directory")->required();
  train->add_option("--overfit-video", tf.overfit_video, "Train on this single video id");
  train->add_option("--nan-inject-step", tf.nan_inject_step, "Test hook: poison the loss at this step");
  add_train_options(train, tf);

  std::string ckpt, eval_data, split = "val", eval_out;
  std::uint64_t eval_seed = 0;
  auto* eval = app.add_subcommand("eval", "Cross entropy of a checkpoint on a corpus split");
  eval->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  eval->add_option("--data", eval_data, "Corpus directory")->required();
  eval->add_option("--split", split, "val or train")->capture_default_str();
  eval->add_option("--out", eval_out, "CSV file to append the row to");
  eval->add_option("--seed", eval_seed, "Dequantisation noise seed")->capture_default_str();

  TrainFlags af;
  bool trained_unconditioned = false;
  auto* ablate = app.add_subcommand("ablate", "Train and evaluate all four variants");
  ablate->add_option("--data", af.data, "Corpus directory")->required();
  ablate->add_option("--out", af.out, "Output directory")->required();
  ablate->add_option("--steps", af.max_steps, "Steps per trained variant");
  ablate->add_flag("--trained-unconditioned", trained_unconditioned, "Train the init variant too");
  add_train_options(ablate, af);
  ablate->remove_option(ablate->get_option("--max-steps"));

  std::string sample_ckpt, sample_out;
  std::optional<int> label;
  int frames = 8;
  double temperature = 0.7;
  std::uint64_t sample_seed = 0;
  auto* sample = app.add_subcommand("sample", "Generate a video from a checkpoint");
  sample->add_option("--checkpoint", sample_ckpt, "Checkpoint file")->required();
  sample->add_option("--label", label, "Label index (state_label checkpoints only)");
  sample->add_option("--frames", frames, "Frames to generate")->capture_default_str();
  sample->add_option("--temperature", temperature, "Latent temperature; 0 decodes the mode")->capture_default_str();
  sample->add_option("--seed", sample_seed, "Sampling seed")->capture_default_str();
  sample->add_option("--out", sample_out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*make) return cmd_make_data(spec, labels, data_out);
    if (*train) return cmd_train(tf);
    if (*eval) return cmd_eval(ckpt, eval_data, split, eval_out, eval_seed);
    if (*ablate) return cmd_ablate(af, trained_unconditioned);
    if (*sample) return cmd_sample(sample_ckpt, label, frames, temperature, sample_seed, sample_out);
  } catch (const std::exception& e) {
    std::cerr << "nfvg: error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
