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

// FastSpeech2-lite: phoneme encoder, per-subword style injection, variance
// adaptor with length regulation, and mel decoder.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msstyle/config.hpp"
#include "msstyle/corpus.hpp"
#include "msstyle/nn.hpp"

namespace msstyle {

// Closed symbol set. Ids are positions in `symbols`.
class PhonemeInventory {
 public:
  PhonemeInventory() = default;
  explicit PhonemeInventory(std::vector<std::string> symbols);
  // Toy inventory plus every phoneme seen in `corpus`, sorted.
  static PhonemeInventory from_corpus(std::span<const Utterance> corpus);

  int size() const { return static_cast<int>(symbols_.size()); }
  bool contains(const std::string& symbol) const { return index_.count(symbol) != 0; }
  // Throws ContractError for unknown symbols.
  int id(const std::string& symbol) const;
  const std::vector<std::string>& symbols() const { return symbols_; }

 private:
  std::vector<std::string> symbols_;
  std::map<std::string, int> index_;
};

struct PhonemeSequence {
  std::vector<int> ids;
  std::vector<int> subword_of;  // non-decreasing, onto [0, n_subwords)

  int num_phonemes() const { return static_cast<int>(ids.size()); }
  int num_subwords() const { return subword_of.empty() ? 0 : subword_of.back() + 1; }
  void validate() const;
};

PhonemeSequence phoneme_sequence(const Utterance& utt, const PhonemeInventory& inventory);

struct VarianceTargets {
  std::vector<int> durations;  // frames per phoneme
  Vector pitch;                // per-phoneme mean F0 (Hz)
  Vector energy;               // per-phoneme mean frame energy
};

VarianceTargets variance_targets(const Utterance& utt);

// Normalisation and quantisation range of pitch and energy, measured on
// per-phoneme training targets.
struct VarianceStats {
  double pitch_mean = 0.0, pitch_std = 1.0, pitch_min = -1.0, pitch_max = 1.0;
  double energy_mean = 0.0, energy_std = 1.0, energy_min = -1.0, energy_max = 1.0;

  static VarianceStats from_corpus(std::span<const Utterance> corpus);
  Vector normalize_pitch(const Vector& hz) const;
  Vector normalize_energy(const Vector& e) const;
  Vector denormalize_pitch(const Vector& z) const;
  Vector denormalize_energy(const Vector& z) const;
  Matrix to_matrix() const;  // 1 x 8
  static VarianceStats from_matrix(const Matrix& m);
};

// Quantises normalised values into `bins` equal-width buckets over [lo, hi].
std::vector<int> bucketize(const Vector& values, double lo, double hi, int bins);

// Phoneme-to-frame index map for the length regulator.
std::vector<int> regulate_indices(std::span<const int> durations);

// round(exp(log_duration) - 1), clamped at 0; an all-zero result gives the
// longest predicted phoneme one frame.
std::vector<int> durations_from_log(const Vector& log_durations);

struct FftBlock {
  nn::MultiHeadSelfAttention attention;
  nn::LayerNorm attention_norm;
  nn::Conv1d conv1, conv2;
  nn::LayerNorm ffn_norm;

  static FftBlock create(ParamStore& store, const std::string& name, const AcousticConfig& c,
                         Rng& rng);
  ad::Var operator()(ad::Graph& g, const ad::Var& x) const;
};

struct VariancePredictor {
  nn::Conv1d conv1, conv2;
  nn::LayerNorm norm1, norm2;
  nn::Linear output;

  static VariancePredictor create(ParamStore& store, const std::string& name,
                                  const AcousticConfig& c, Rng& rng);
  // n x D -> n x 1
  ad::Var operator()(ad::Graph& g, const ad::Var& x) const;
};

struct VarianceVars {
  ad::Var expanded;  // T x D_model
  ad::Var duration;  // n x 1, log(frames + 1)
  ad::Var pitch;     // n x 1, normalised
  ad::Var energy;    // n x 1, normalised
  std::vector<int> durations;  // durations used for expansion
};

struct AcousticVars {
  ad::Var hidden;  // after style injection
  VarianceVars variance;
  ad::Var mel;
};

struct AcousticLosses {
  ad::Var mel, duration, pitch, energy, total;
};

class AcousticModel {
 public:
  AcousticModel() = default;
  AcousticModel(ParamStore& store, const ModelConfig& config, int vocabulary, Rng& rng);

  static constexpr const char* kPrefix = "acoustic";
  const VarianceStats& stats() const { return stats_; }
  void set_stats(const VarianceStats& stats) { stats_ = stats; }
  int model_width() const { return width_; }
  int n_mels() const { return n_mels_; }
  int bins() const { return bins_; }

  ad::Var encode(ad::Graph& g, const PhonemeSequence& seq) const;
  // style: n_subwords x D_style.
  ad::Var inject(ad::Graph& g, const ad::Var& hidden, const ad::Var& style,
                 std::span<const int> subword_of) const;
  ad::Var project_style(ad::Graph& g, const ad::Var& style) const;
  // Teacher forcing when `targets` is given, own predictions otherwise.
  VarianceVars adapt(ad::Graph& g, const ad::Var& hidden, const VarianceTargets* targets) const;
  ad::Var decode(ad::Graph& g, const ad::Var& expanded) const;
  AcousticVars forward(ad::Graph& g, const PhonemeSequence& seq, const ad::Var& style,
                       const VarianceTargets* targets) const;
  AcousticLosses losses(ad::Graph& g, const AcousticVars& out, const VarianceTargets& targets,
                        const Matrix& mel_target) const;

 private:
  Parameter* embedding_ = nullptr;
  std::vector<FftBlock> encoder_, decoder_;
  std::optional<nn::Linear> style_projection_;
  VariancePredictor duration_, pitch_, energy_;
  Parameter* pitch_embedding_ = nullptr;
  Parameter* energy_embedding_ = nullptr;
  nn::Linear mel_output_;
  VarianceStats stats_;
  int width_ = 0;
  int n_mels_ = 0;
  int bins_ = 0;
  int max_phonemes_ = 0;
};

// Public value-level operations.
Matrix encode_phonemes(const PhonemeSequence& seq, const AcousticModel& model);
Matrix inject_style(const Matrix& hidden, const Matrix& style, std::span<const int> subword_of,
                    const AcousticModel& model);

struct VarianceResult {
  Matrix expanded;
  Vector duration, pitch, energy;  // log-duration and normalised pitch/energy
  std::vector<int> durations;
};
VarianceResult variance_adapt(const Matrix& hidden, const VarianceTargets* targets,
                              const AcousticModel& model);
Matrix decode_mel(const Matrix& expanded, const AcousticModel& model);

}  // namespace msstyle
