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

// The full system: extractor, predictor and acoustic model over one
// parameter store, plus the two synthesis paths.

#include <memory>

#include "msstyle/acoustic.hpp"
#include "msstyle/checkpoint.hpp"
#include "msstyle/extractor.hpp"
#include "msstyle/predictor.hpp"

namespace msstyle {

struct MsStyleModel {
  ModelConfig config;
  PhonemeInventory inventory;
  ParamStore store;
  StyleExtractor extractor;
  StylePredictor predictor;
  AcousticModel acoustic;

  static std::unique_ptr<MsStyleModel> create(const ModelConfig& config, PhonemeInventory inventory,
                                              std::uint64_t seed);
  // Parameters, config, inventory and variance statistics.
  void save_into(Checkpoint& ckpt) const;
  static std::unique_ptr<MsStyleModel> from_checkpoint(const Checkpoint& ckpt);

 private:
  MsStyleModel() = default;
};

struct SynthesisResult {
  Matrix mel;                 // T x n_mels
  Matrix style;               // n_subwords x D_style, summed multi-scale styles
  std::vector<int> durations; // frames per phoneme
  Vector pitch_hz;            // per phoneme
  Vector energy;              // per phoneme

  // Per-phoneme pitch repeated over the used durations.
  Vector frame_pitch() const;
};

// Predictor-conditioned inference: styles from text context only.
SynthesisResult synthesize(const MsStyleModel& model, const ContextWindow& window,
                           const SemanticEmbedder& embedder);
// Extractor-conditioned synthesis from the window's reference mels.
SynthesisResult synthesize_from_reference(const MsStyleModel& model, const ContextWindow& window,
                                          const VarianceTargets* teacher = nullptr);

}  // namespace msstyle
