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

// Model sizes and training schedule, with the two presets and their JSON
// form. Every constant the pipeline uses is reachable from here.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "msstyle/corpus.hpp"

namespace msstyle {

enum class Preset { kDefault, kTiny };

Preset parse_preset(const std::string& name);
std::string to_string(Preset preset);

struct ExtractorConfig {
  std::vector<int> conv_channels;  // one 3x3 stride-2 conv per entry
  int style_width = 128;           // D_style
  int tokens = 10;                 // K
  int heads = 4;
};

struct PredictorConfig {
  int semantic_width = 32;  // D_sem delivered by the embedder
  int projection = 128;     // linear projection before the subword GRU
  int subword_hidden = 64;  // per direction
  int sentence_hidden = 64;
  int attention = 64;
};

struct AcousticConfig {
  int model_width = 256;
  int encoder_layers = 4;
  int decoder_layers = 4;
  int heads = 2;
  int ffn_hidden = 1024;
  int ffn_kernel = 9;
  int variance_filter = 256;
  int variance_kernel = 3;
  int bins = 256;
  int max_phonemes = 128;  // embedding table capacity
};

struct ModelConfig {
  Preset preset = Preset::kDefault;
  MelConfig mel;
  int context_radius = 2;      // L
  int max_global_frames = 2000;
  ExtractorConfig extractor;
  PredictorConfig predictor;
  AcousticConfig acoustic;

  static ModelConfig for_preset(Preset preset);
  void validate() const;
};

struct TrainingSchedule {
  int stage1_steps_per_level = 60000;
  int stage2_steps = 20000;
  int stage3_steps = 20000;
  int batch_size = 16;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_epsilon = 1e-9;
  int warmup_steps = 4000;
  double lr_scale = 1.0;
  double stage3_lr_scale = 0.1;
  double grad_clip_norm = 1.0;
  int checkpoint_every = 1000;
  std::uint64_t seed = 1234;

  static TrainingSchedule for_preset(Preset preset);
  void validate() const;
};

nlohmann::json to_json(const MelConfig& c);
nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const TrainingSchedule& s);
// Missing keys keep the values already present in `base`.
MelConfig mel_config_from_json(const nlohmann::json& j, MelConfig base = {});
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base);
TrainingSchedule schedule_from_json(const nlohmann::json& j, TrainingSchedule base);

}  // namespace msstyle
