// SPDX-License-Identifier: Apache-2.0
#include "nfvg/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace nfvg {
inline namespace NFVG_PRECISION_NS {

namespace fs = std::filesystem;

namespace {
constexpr std::uint64_t kOrderStream = 0x4f52;
constexpr std::uint64_t kNoiseStream = 0x4e5a;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}  // namespace

// ---------------------------------------------------------------------------
// Config

void TrainConfig::validate() const {
  if (!(lr > 0) || batch_size < 1 || max_steps < 0 || !(clip > 0) || checkpoint_interval < 1) {
    throw UsageError("train config: lr, batch size, clip and checkpoint interval must be positive");
  }
}

nlohmann::json TrainConfig::to_json() const {
  return nlohmann::json{{"lr", lr},
                        {"batch_size", batch_size},
                        {"max_steps", max_steps},
                        {"clip", clip},
                        {"checkpoint_interval", checkpoint_interval},
                        {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.clip = j.value("clip", c.clip);
  c.checkpoint_interval = j.value("checkpoint_interval", c.checkpoint_interval);
  c.seed = j.value("seed", c.seed);
  return c;
}

std::string config_hash(const ModelConfig& model, const std::string& corpus_hash) {
  return hex32(crc32(model.to_json().dump() + "|" + corpus_hash));
}

nlohmann::json RunMeta::to_json() const {
  return nlohmann::json{{"model", model.to_json()},
                        {"train", train.to_json()},
                        {"corpus_hash", corpus_hash},
                        {"config_hash", config_hash()}};
}

RunMeta RunMeta::from_json(const nlohmann::json& j) {
  RunMeta m;
  m.model = ModelConfig::from_json(j.at("model"));
  m.train = TrainConfig::from_json(j.at("train"));
  m.corpus_hash = j.at("corpus_hash").get<std::string>();
  return m;
}

// ---------------------------------------------------------------------------
// Loss

LossTerms video_loss(VideoModel& model, std::span<const VideoRecord* const> batch, Rng* noise) {
  if (batch.empty()) throw UsageError("loss: empty batch");
  const int frames = batch.front()->frames;
  const int n = static_cast<int>(batch.size());
  const int dims = model.config().dims();

  std::vector<Tensor> inputs, context;
  std::vector<int> labels;
  for (int t = 0; t < frames; ++t) {
    inputs.push_back(frame_batch(batch, t, noise));
    context.push_back(noise ? frame_batch(batch, t, nullptr) : inputs.back());
  }
  for (const VideoRecord* v : batch) labels.push_back(v->label);

  VideoModel::FrameLogProbs lp = model.log_probs(inputs, context, labels);
  Tensor total = sum(lp.head);
  const double head_sum = total.item();
  double tail_sum = 0.0;
  for (const Tensor& t : lp.tail) {
    Tensor s = sum(t);
    tail_sum += s.item();
    total = add(total, s);
  }

  LossTerms out;
  const double norm = static_cast<double>(n) * frames * dims;
  out.loss = add_scalar(scale(total, static_cast<Real>(-1.0 / norm)), static_cast<Real>(kDequantNatsPerDim));
  out.head_npd = nats_per_dim(head_sum / n, dims);
  out.tail_npd = lp.tail.empty() ? kNaN : nats_per_dim(tail_sum / (static_cast<double>(n) * lp.tail.size()), dims);
  out.total_npd = nats_per_dim((head_sum + tail_sum) / (static_cast<double>(n) * frames), dims);
  if (!std::isfinite(out.total_npd)) throw NumericError("loss: non-finite value");
  return out;
}

// ---------------------------------------------------------------------------
// Gradients and optimizer

double global_grad_norm(const ParamList& params) {
  double acc = 0.0;
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (Real g : p.tensor.grad()) acc += static_cast<double>(g) * g;
  }
  return std::sqrt(acc);
}

double clip_gradients(ParamList& params, double threshold) {
  const double norm = global_grad_norm(params);
  if (norm > threshold) {
    const double factor = threshold / norm;
    for (auto& p : params) {
      if (!p.tensor.has_grad()) continue;
      for (Real& g : p.tensor.mutable_grad()) g = static_cast<Real>(g * factor);
    }
  }
  return norm;
}

Adam::Adam(ParamList params) : params_(std::move(params)), t_tensor_(Shape{}, Real(0)) {
  for (const auto& p : params_) {
    m_.push_back(Tensor::zeros(p.tensor.shape()));
    v_.push_back(Tensor::zeros(p.tensor.shape()));
  }
}

void Adam::step(double lr) {
  t_ = static_cast<long>(t_tensor_.item()) + 1;
  t_tensor_.mutable_data()[0] = static_cast<Real>(t_);
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i].tensor;
    if (!p.has_grad()) continue;
    auto value = p.mutable_data();
    auto grad = p.grad();
    auto m = m_[i].mutable_data();
    auto v = v_[i].mutable_data();
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double g = grad[k];
      const double mk = kBeta1 * m[k] + (1.0 - kBeta1) * g;
      const double vk = kBeta2 * v[k] + (1.0 - kBeta2) * g * g;
      m[k] = static_cast<Real>(mk);
      v[k] = static_cast<Real>(vk);
      value[k] = static_cast<Real>(value[k] - lr * (mk / c1) / (std::sqrt(vk / c2) + kEps));
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

ParamList Adam::state_entries() {
  ParamList out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.push_back({"optimizer/m/" + params_[i].name, m_[i]});
    out.push_back({"optimizer/v/" + params_[i].name, v_[i]});
  }
  out.push_back({"optimizer/t", t_tensor_});
  return out;
}

GuardAction nan_guard(double loss_value, bool gradients_finite, bool have_checkpoint, long step) {
  if (std::isfinite(loss_value) && gradients_finite) return GuardAction::kContinue;
  if (!have_checkpoint) {
    throw NumericError("non-finite loss or gradient at step " + std::to_string(step) +
                       " before any checkpoint was written; nothing to roll back to");
  }
  return GuardAction::kRollback;
}

// ---------------------------------------------------------------------------
// Metrics

std::string metrics_header() {
  return "step,loss_npd,loss_head_npd,loss_tail_npd,grad_norm_preclip,lemb_grad_norm,rollbacks,wall_ms";
}

namespace {
std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}
}  // namespace

std::string metrics_row(const StepMetrics& m) {
  std::string row = std::to_string(m.step) + "," + num(m.loss_npd) + "," + num(m.head_npd) + ",";
  // Single-frame runs have no tail term.
  if (!std::isnan(m.tail_npd) || m.rolled_back) row += num(m.tail_npd);
  row += "," + num(m.grad_norm_preclip) + ",";
  if (m.lemb_grad_norm) row += num(*m.lemb_grad_norm);
  row += "," + std::to_string(m.rollbacks) + "," + num(m.wall_ms);
  return row;
}

// ---------------------------------------------------------------------------
// Trainer

namespace {
ParamList model_params(VideoModel& model) { return model.state().params; }
}  // namespace

Trainer::Trainer(VideoModel& model, std::vector<VideoRecord> data, TrainConfig config, std::string corpus_hash,
                 fs::path out_dir, std::ostream* log)
    : model_(model),
      data_(std::move(data)),
      config_(config),
      meta_{model.config(), config, std::move(corpus_hash)},
      out_dir_(std::move(out_dir)),
      log_(log),
      adam_(model_params(model)),
      buffers_(model.state().buffers) {
  config_.validate();
  if (data_.empty()) throw UsageError("trainer: no training videos");
  for (const auto& v : data_) {
    if (v.channels != model.config().channels || v.height != model.config().height ||
        v.width != model.config().width || v.frames != data_.front().frames) {
      throw ShapeError("trainer: video " + std::to_string(v.video_id) + " (" + std::to_string(v.channels) + "x" +
                       std::to_string(v.height) + "x" + std::to_string(v.width) +
                       ") does not match the model frame shape or the corpus frame count");
    }
  }
  if (!out_dir_.empty()) fs::create_directories(out_dir_);
}

std::vector<const VideoRecord*> Trainer::batch_at(std::uint64_t cursor) {
  const std::uint64_t n = data_.size();
  std::vector<const VideoRecord*> out;
  for (int k = 0; k < config_.batch_size; ++k) {
    const std::uint64_t g = cursor * config_.batch_size + k;
    const std::uint64_t epoch = g / n;
    auto it = epoch_orders_.find(epoch);
    if (it == epoch_orders_.end()) {
      std::vector<int> order(n);
      for (std::uint64_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);
      Rng rng = make_rng(config_.seed, epoch, kOrderStream);
      for (std::uint64_t i = n - 1; i > 0; --i) {
        const auto j = std::uniform_int_distribution<std::uint64_t>(0, i)(rng);
        std::swap(order[i], order[j]);
      }
      it = epoch_orders_.emplace(epoch, std::move(order)).first;
    }
    out.push_back(&data_[it->second[g % n]]);
  }
  return out;
}

void Trainer::initialize() {
  bool pending = false;
  for (const auto& b : buffers_)
    if (b.name.ends_with("/initialized") && b.tensor.data()[0] == 0) pending = true;
  if (!pending) return;
  const auto batch = batch_at(cursor_);
  Rng noise = make_rng(config_.seed, cursor_, kNoiseStream);
  model_.set_training(true);
  video_loss(model_, batch, &noise);
  model_.set_training(false);
  if (log_) *log_ << "actnorm: data-dependent init on the first batch (no optimizer step)\n";
}

StepMetrics Trainer::step() {
  const auto start = std::chrono::steady_clock::now();
  StepMetrics m;
  m.step = step_;
  const auto batch = batch_at(cursor_);
  Rng noise = make_rng(config_.seed, cursor_, kNoiseStream);

  Tape tape;
  LossTerms terms;
  bool failed = false;
  {
    TapeScope scope(tape);
    try {
      terms = video_loss(model_, batch, &noise);
      if (step_ == config_.nan_inject_step) {
        terms.loss = scale(terms.loss, std::numeric_limits<Real>::quiet_NaN());
        terms.total_npd = terms.head_npd = terms.tail_npd = kNaN;
      }
    } catch (const NumericError&) {
      failed = true;
    }
  }
  const double loss_value = failed ? kNaN : static_cast<double>(terms.loss.item());
  ParamList& params = adam_.params();
  bool grads_finite = true;
  if (std::isfinite(loss_value)) {
    tape.backward(terms.loss);
    for (const auto& p : params)
      if (p.tensor.has_grad() && !all_finite(p.tensor.grad())) grads_finite = false;
  } else {
    tape.clear();
  }

  if (nan_guard(loss_value, grads_finite, last_checkpoint_.has_value(), step_) == GuardAction::kRollback) {
    restore(*last_checkpoint_, /*restore_position=*/false);
    adam_.zero_grad();
    ++rollbacks_;
    m.rolled_back = true;
    m.loss_npd = m.head_npd = m.tail_npd = m.grad_norm_preclip = m.grad_norm_postclip = kNaN;
    if (log_) {
      *log_ << "nan-guard: non-finite loss/gradient at step " << step_ << "; restored checkpoint from step "
            << last_checkpoint_->step << " and skipped the batch\n";
    }
  } else {
    if (LabelEmbeddingTable* labels = model_.labels()) m.lemb_grad_norm = labels->grad_norm();
    m.grad_norm_preclip = clip_gradients(params, config_.clip);
    m.grad_norm_postclip = global_grad_norm(params);
    if (m.grad_norm_postclip > config_.clip * (1.0 + 1e-5)) {
      throw std::logic_error("clip_gradients: post-clip norm " + std::to_string(m.grad_norm_postclip) +
                             " exceeds threshold " + std::to_string(config_.clip));
    }
    adam_.step(config_.lr);
    adam_.zero_grad();
    m.loss_npd = terms.total_npd;
    m.head_npd = terms.head_npd;
    m.tail_npd = terms.tail_npd;
  }
  ++cursor_;
  ++step_;
  m.rollbacks = rollbacks_;
  if (config_.wall_clock) {
    m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  }
  if (step_ % config_.checkpoint_interval == 0) save_checkpoint();
  return m;
}

std::vector<StepMetrics> Trainer::run(const std::function<void(const StepMetrics&)>& on_step) {
  if (config_.max_steps == 0) {
    model_.mark_untrained_initialized();
  } else {
    initialize();
  }
  std::ofstream metrics, lemb;
  if (!out_dir_.empty()) {
    metrics.open(out_dir_ / "metrics.csv");
    metrics << metrics_header() << "\n";
    if (model_.labels()) {
      lemb.open(out_dir_ / "lemb_grad_norm.csv");
      lemb << "step,lemb_grad_norm\n";
    }
  }
  std::vector<StepMetrics> out;
  while (step_ < config_.max_steps) {
    StepMetrics m = step();
    if (metrics.is_open()) metrics << metrics_row(m) << "\n";
    if (lemb.is_open() && m.lemb_grad_norm) lemb << m.step << "," << num(*m.lemb_grad_norm) << "\n";
    if (on_step) on_step(m);
    out.push_back(m);
  }
  if (!out_dir_.empty()) snapshot().save(out_dir_ / "final.nfvg");
  return out;
}

Checkpoint Trainer::snapshot() const {
  Checkpoint c;
  c.config_json = meta_.to_json().dump();
  c.step = static_cast<std::uint64_t>(step_);
  c.cursor = cursor_;
  ModuleState s = model_.state();
  append_entries(c, s.params);
  append_entries(c, s.buffers);
  append_entries(c, const_cast<Adam&>(adam_).state_entries());
  return c;
}

void Trainer::restore(const Checkpoint& ckpt, bool restore_position) {
  ModuleState s = model_.state();
  ParamList all = s.params;
  all.insert(all.end(), s.buffers.begin(), s.buffers.end());
  const ParamList opt = adam_.state_entries();
  all.insert(all.end(), opt.begin(), opt.end());
  assign_entries(ckpt, all);
  if (restore_position) {
    step_ = static_cast<long>(ckpt.step);
    cursor_ = ckpt.cursor;
  }
}

void Trainer::save_checkpoint() {
  last_checkpoint_ = snapshot();
  if (!out_dir_.empty()) {
    char name[48];
    std::snprintf(name, sizeof name, "checkpoint_%06ld.nfvg", step_);
    last_checkpoint_->save(out_dir_ / name);
  }
}

LoadedModel load_model(const fs::path& checkpoint_path) {
  LoadedModel out;
  out.checkpoint = Checkpoint::load(checkpoint_path);
  out.meta = RunMeta::from_json(nlohmann::json::parse(out.checkpoint.config_json));
  out.model = std::make_unique<VideoModel>(out.meta.model);
  ModuleState s = out.model->state();
  ParamList all = s.params;
  all.insert(all.end(), s.buffers.begin(), s.buffers.end());
  assign_entries(out.checkpoint, all);
  return out;
}

}  // namespace NFVG_PRECISION_NS
}  // namespace nfvg
