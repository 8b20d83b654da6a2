// Copyright 2026 The msstyle Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Three-step training: level-wise extractor + acoustic training, distillation
// of extractor styles into the predictor, then joint fine-tuning.

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "msstyle/checkpoint.hpp"
#include "msstyle/model.hpp"
#include "msstyle/optim.hpp"

namespace msstyle {

// Trainable flag per parameter group. Groups are name prefixes.
struct FreezeMask {
  std::map<std::string, bool> frozen;

  static const std::vector<std::string>& groups();
  // Stage 1, level k: only that extractor level and the acoustic model train.
  static FreezeMask stage1(StyleLevel level);
  // Stage 2: only the predictor trains.
  static FreezeMask stage2();
  // Stage 3: predictor and acoustic model train, the extractor is frozen.
  static FreezeMask stage3();

  void apply(ParamStore& store) const;
  std::vector<std::string> frozen_parameters(const ParamStore& store) const;
};

// MSE(Ŝ_g, S_g) + MSE(Ŝ_s, S_s) + mean_i MSE(Ŝ_w[i], S_w[i]).
ad::Var distillation_loss(ad::Graph& g, const PredictedVars& predicted, const MultiScaleStyle& extracted);
double distillation_loss(const MultiScaleStyle& extracted, const PredictedStyles& predicted);

struct StepRecord {
  int stage = 0;
  int phase = 0;
  long step = 0;
  double lr = 0.0;
  double mel = 0.0, duration = 0.0, pitch = 0.0, energy = 0.0, distill = 0.0, total = 0.0;

  std::string to_json_line() const;
};

struct Progress {
  int stage = 1;
  int phase = 0;
  long step = 0;  // completed optimizer steps in the current phase
};

struct TrainerOptions {
  // When set, checkpoints go to <work_dir>/checkpoints and metrics to
  // <work_dir>/metrics.jsonl.
  std::optional<std::filesystem::path> work_dir;
  // Stop after this many optimizer steps in this invocation (< 0: no limit).
  long max_steps = -1;
  bool cache_targets = true;
};

class Trainer {
 public:
  Trainer(MsStyleModel& model, std::vector<Utterance> corpus, TrainingSchedule schedule,
          const SemanticEmbedder& embedder, TrainerOptions options = {});

  // Runs `stage` from the current progress; a stage already behind the
  // progress marker is a no-op. Returns false when the step budget of this
  // trainer ran out first.
  bool run_stage(int stage);

  void write_checkpoint(Checkpoint& ckpt) const;
  // Restores parameters, optimizer state and progress, and rewinds the
  // metrics log to the restored position.
  void restore(const Checkpoint& ckpt);

  const Progress& progress() const { return progress_; }
  const std::vector<StepRecord>& history() const { return history_; }
  const AdamState& optimizer_state() const { return adam_.state(); }
  int phases(int stage) const { return stage == 1 ? 3 : 1; }
  long steps_in_phase(int stage) const;
  double learning_rate(int stage, long step) const;
  std::vector<int> batch_indices(int stage, int phase, long step) const;

  // Called at every phase start (starting = true) and end.
  std::function<void(int stage, int phase, bool starting)> on_phase;

  // Extractor styles for utterance `index` (cached when enabled).
  MultiScaleStyle extractor_targets(int index);
  // Mean teacher-forced mel L1 over `indices`, conditioned on extractor or
  // predictor styles.
  double mel_l1(std::span<const int> indices, bool predictor_styles);
  double mean_distillation(std::span<const int> indices);
  std::size_t corpus_size() const { return corpus_.size(); }

 private:
  struct Item {
    PhonemeSequence phonemes;
    VarianceTargets targets;
    std::vector<FrameRange> bounds;
    std::optional<SemanticEmbeddingSeq> semantic;
  };

  Item& item(int index);
  ContextWindow window(int index) const;
  const SemanticEmbeddingSeq& semantic(int index);
  StepRecord step(int stage, int phase, long t);
  void save_latest() const;
  void append_metrics(const StepRecord& r) const;
  [[noreturn]] void abort_numeric(const StepRecord& r, const std::vector<int>& batch) const;

  MsStyleModel& model_;
  std::vector<Utterance> corpus_;
  TrainingSchedule schedule_;
  const SemanticEmbedder& embedder_;
  TrainerOptions options_;
  std::shared_ptr<const Utterance> pad_;
  Adam adam_;
  long budget_;
  Progress progress_;
  std::vector<StepRecord> history_;
  std::vector<std::optional<Item>> items_;
  std::map<int, MultiScaleStyle> target_cache_;
};

std::filesystem::path stage_checkpoint_path(const std::filesystem::path& work_dir, int stage);
std::filesystem::path latest_checkpoint_path(const std::filesystem::path& work_dir);

// Keeps only the metrics lines logged before `p`, i.e. earlier stages,
// earlier phases, and the first p.step steps of phase p.phase.
void trim_metrics_log(const std::filesystem::path& file, const Progress& p);

}  // namespace msstyle
