// SPDX-License-Identifier: Apache-2.0
//
// Maximum-likelihood training: Adam, global-norm gradient clipping, NaN
// detection with rollback to the last checkpoint, and a CSV metrics stream.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nfvg/checkpoint.hpp"
#include "nfvg/dataset.hpp"
#include "nfvg/video_model.hpp"

namespace nfvg {
inline namespace NFVG_PRECISION_NS {

struct TrainConfig {
  double lr = 1e-4;
  int batch_size = 8;
  long max_steps = 1000;
  double clip = 50.0;
  long checkpoint_interval = 100;
  std::uint64_t seed = 0;
  // Test hook: the loss of this step is multiplied by NaN.
  long nan_inject_step = -1;
  // Fill the wall_ms column; off keeps metrics byte-reproducible.
  bool wall_clock = false;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

// Mean negative log-likelihood over the batch, nats per dimension, with the
// 8-bit dequantisation correction. Head and tail parts reported separately;
// tail_npd is NaN for single-frame videos.
struct LossTerms {
  Tensor loss;  // scalar; what the optimizer minimises
  double total_npd = 0;
  double head_npd = 0;
  double tail_npd = 0;
};

// noise == nullptr scores bin centres instead of dequantised samples.
LossTerms video_loss(VideoModel& model, std::span<const VideoRecord* const> batch, Rng* noise);

double global_grad_norm(const ParamList& params);
// Scales every gradient by threshold/g when the global norm g exceeds the
// threshold. Returns g.
double clip_gradients(ParamList& params, double threshold);

class Adam {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  explicit Adam(ParamList params);

  void step(double lr);
  void zero_grad();
  long steps_taken() const { return t_; }

  ParamList& params() { return params_; }
  // optimizer/m/<name>, optimizer/v/<name>, optimizer/t
  ParamList state_entries();

 private:
  ParamList params_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  Tensor t_tensor_;  // mirrors t_ for serialisation
  long t_ = 0;
};

enum class GuardAction { kContinue, kRollback };

// NumericError when a rollback is needed but no checkpoint exists yet.
GuardAction nan_guard(double loss_value, bool gradients_finite, bool have_checkpoint, long step);

struct StepMetrics {
  long step = 0;
  double loss_npd = 0;
  double head_npd = 0;
  double tail_npd = 0;
  double grad_norm_preclip = 0;
  double grad_norm_postclip = 0;
  std::optional<double> lemb_grad_norm;
  int rollbacks = 0;
  double wall_ms = 0;
  bool rolled_back = false;
};

std::string metrics_header();
std::string metrics_row(const StepMetrics& m);

// Binds a model configuration to the corpus it was trained on.
std::string config_hash(const ModelConfig& model, const std::string& corpus_hash);

struct RunMeta {
  ModelConfig model;
  TrainConfig train;
  std::string corpus_hash;

  nlohmann::json to_json() const;
  static RunMeta from_json(const nlohmann::json& j);
  std::string config_hash() const { return nfvg::config_hash(model, corpus_hash); }
};

class Trainer {
 public:
  // out_dir empty keeps checkpoints in memory only.
  Trainer(VideoModel& model, std::vector<VideoRecord> data, TrainConfig config, std::string corpus_hash,
          std::filesystem::path out_dir = {}, std::ostream* log = nullptr);

  // ActNorm data-dependent init from the first batch; no optimizer step.
  // A no-op when every ActNorm is already initialised.
  void initialize();
  StepMetrics step();
  // Runs until max_steps iterations have been taken; writes metrics.csv and
  // final.nfvg when an output directory is set.
  std::vector<StepMetrics> run(const std::function<void(const StepMetrics&)>& on_step = {});

  Checkpoint snapshot() const;
  void restore(const Checkpoint& ckpt, bool restore_position = true);
  const std::optional<Checkpoint>& last_checkpoint() const { return last_checkpoint_; }

  long steps() const { return step_; }
  int rollbacks() const { return rollbacks_; }
  Adam& optimizer() { return adam_; }
  const RunMeta& meta() const { return meta_; }

  std::vector<const VideoRecord*> batch_at(std::uint64_t cursor);

 private:
  void save_checkpoint();

  VideoModel& model_;
  std::vector<VideoRecord> data_;
  TrainConfig config_;
  RunMeta meta_;
  std::filesystem::path out_dir_;
  std::ostream* log_;
  Adam adam_;
  ParamList buffers_;
  long step_ = 0;
  std::uint64_t cursor_ = 0;
  int rollbacks_ = 0;
  std::optional<Checkpoint> last_checkpoint_;
  std::map<std::uint64_t, std::vector<int>> epoch_orders_;
};

struct LoadedModel {
  std::unique_ptr<VideoModel> model;
  RunMeta meta;
  Checkpoint checkpoint;
};

LoadedModel load_model(const std::filesystem::path& checkpoint_path);

}  // namespace NFVG_PRECISION_NS
}  // namespace nfvg
