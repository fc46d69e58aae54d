// SPDX-License-Identifier: Apache-2.0
//
// Held-out cross entropy per variant and the four-variant ablation table.
#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "nfvg/dataset.hpp"
#include "nfvg/training.hpp"

namespace nfvg {
inline namespace NFVG_PRECISION_NS {

struct EvalRow {
  std::string variant;
  double ce_head_npd = 0;
  double ce_tail_npd = 0;  // mean over frames 1..T-1
  int n_videos = 0;
  std::string config_hash;
  Split split = Split::kValidation;
};

inline constexpr int kEvalBatch = 16;

// CompatibilityError when the run was trained on a different corpus or frame
// shape. Dequantisation noise is seeded by (eval_seed, batch index).
EvalRow evaluate(VideoModel& model, const RunMeta& meta, const Corpus& corpus, Split split,
                 std::uint64_t eval_seed = 0);

std::string eval_header();
std::string eval_row_csv(const EvalRow& row);
// Appends, writing the header first when the file is new or empty.
void append_eval_row(const std::filesystem::path& path, const EvalRow& row);

struct AblationOptions {
  ModelConfig model;  // variant is overwritten per run
  TrainConfig train;
  // Train the init variant with the same budget instead of leaving it untrained.
  bool trained_unconditioned = false;
};

struct AblationResult {
  std::vector<EvalRow> rows;  // init, prev_frame, state, state_label
  double state_minus_prev_tail = 0;
};

// Trains every variant under out_dir/<variant>/ and writes ablation.csv and
// findings.txt to out_dir.
AblationResult run_ablation(const Corpus& corpus, const AblationOptions& options, const std::filesystem::path& out_dir,
                            std::ostream* log = nullptr);

}  // namespace NFVG_PRECISION_NS
}  // namespace nfvg
