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

// Data model, feature extraction, alignment handling, context windows and
// the synthetic toy corpus.

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "msstyle/autodiff.hpp"

namespace msstyle {

struct MelConfig {
  double sample_rate = 24000.0;
  int frame_size = 1200;
  int hop_size = 240;
  int n_mels = 80;
  double fmin = 0.0;
  double fmax = 12000.0;
  double log_floor = std::log(1e-5);

  // Throws ContractError when the configuration is unusable.
  void validate() const;
  bool operator==(const MelConfig&) const = default;
};

// T x n_mels log-amplitude frames.
struct MelSpectrogram {
  Matrix frames;
  MelConfig config;

  Eigen::Index num_frames() const { return frames.rows(); }
};

// Inclusive phoneme index range [first, last] of one subword.
struct PhonemeSpan {
  int first = 0;
  int last = 0;
  bool operator==(const PhonemeSpan&) const = default;
};

// Half-open frame range [begin, end).
struct FrameRange {
  int begin = 0;
  int end = 0;
  bool empty() const { return end <= begin; }
  int size() const { return end - begin; }
  bool operator==(const FrameRange&) const = default;
};

struct AlignmentMap {
  std::vector<int> phoneme_durations;
  std::vector<PhonemeSpan> subword_to_phoneme;

  int total_frames() const;
  int num_phonemes() const { return static_cast<int>(phoneme_durations.size()); }
  int num_subwords() const { return static_cast<int>(subword_to_phoneme.size()); }
  // Per-phoneme subword index (non-decreasing, onto [0, num_subwords)).
  std::vector<int> subword_of_phoneme() const;
  // Throws InvalidInputError describing the first broken invariant.
  void validate() const;
};

struct Utterance {
  std::string id;
  std::string text;
  std::vector<std::string> subwords;
  std::vector<std::string> phonemes;
  MelSpectrogram mel;
  AlignmentMap alignment;
  Vector pitch;   // per-frame F0 in Hz, 0 = unvoiced
  Vector energy;  // per-frame
  int order_index = 0;
  int chapter = 0;
  bool padding = false;

  // Throws InvalidInputError naming the utterance on any violated invariant.
  void validate() const;
};

// The 2L+1 sentences around a current utterance, in corpus order.
// Entries are non-owning; out-of-range neighbours point at `pad`.
struct ContextWindow {
  int radius = 0;
  std::vector<const Utterance*> sentences;
  std::shared_ptr<const Utterance> pad;

  const Utterance& current() const { return *sentences[static_cast<std::size_t>(radius)]; }
  const Utterance& at(std::size_t i) const { return *sentences[i]; }
  std::size_t size() const { return sentences.size(); }
  bool is_padding(std::size_t i) const { return sentences[i]->padding; }
};

// Centered framing with reflect padding; T = floor(N / hop) + 1.
MelSpectrogram compute_mel(std::span<const double> waveform, const MelConfig& config);

// n_mels x (frame_size/2 + 1) triangular filters of unit height.
Matrix mel_filterbank(const MelConfig& config);
// Periodic Hann window.
std::vector<double> hann_window(int size);

// Center frequency (Hz) of every mel band.
std::vector<double> mel_band_centers(const MelConfig& config);

// Per-frame L2 norm of the linear-magnitude mel frame.
Vector frame_energy(const Matrix& log_mel);

// Autocorrelation F0 estimate per centered frame; 0 marks unvoiced frames.
Vector estimate_pitch(std::span<const double> waveform, const MelConfig& config,
                      double min_f0 = 50.0, double max_f0 = 500.0);

// Mean of the frames spanned by each phoneme; zero-duration phonemes give 0.
Vector average_by_duration(const Vector& frame_values, std::span<const int> durations);

// Repeats each per-phoneme value for its duration.
Vector expand_by_duration(const Vector& phoneme_values, std::span<const int> durations);

// Frame range of every subword; the ranges partition [0, T).
std::vector<FrameRange> subword_frame_boundaries(const AlignmentMap& alignment);

// Frames of `range`; an empty range yields a single log_floor frame.
Matrix mel_segment(const MelSpectrogram& mel, FrameRange range);

// One log_floor frame with empty text.
std::shared_ptr<const Utterance> make_padding_utterance(const MelConfig& config);

ContextWindow build_context_window(std::span<const Utterance> corpus, int index, int radius,
                                   std::shared_ptr<const Utterance> pad);
ContextWindow build_context_window(std::span<const Utterance> corpus, int index, int radius);
// Same, but neighbours from other chapters are replaced by padding.
ContextWindow build_chapter_window(std::span<const Utterance> corpus, int index, int radius,
                                   std::shared_ptr<const Utterance> pad);

// Time-axis concatenation of the window's mels. When longer than
// `max_frames` (> 0), a span of max_frames centred on the current sentence
// is kept.
Matrix concatenated_window_mel(const ContextWindow& window, int max_frames);

struct ToyCorpusOptions {
  int subwords_per_utterance = 4;
  int min_duration = 2;  // frames per phoneme
  int max_duration = 5;
  int utterances_per_chapter = 8;
  MelConfig mel;
};

// Fixed phoneme inventory and word list used by the toy corpus.
const std::vector<std::string>& toy_phoneme_inventory();

struct ToyUtterance {
  Utterance utterance;
  std::vector<double> waveform;
};

// Deterministic pseudo-corpus; the same seed gives bit-identical output.
std::vector<ToyUtterance> generate_toy_corpus_with_audio(std::uint64_t seed, int n_utterances,
                                                         const ToyCorpusOptions& shape = {});
std::vector<Utterance> generate_toy_corpus(std::uint64_t seed, int n_utterances,
                                           const ToyCorpusOptions& shape = {});

// Contiguous chapters; the last `eval_chapters` chapters form the eval split
// so context windows never straddle the two.
struct CorpusSplit {
  std::vector<Utterance> train;
  std::vector<Utterance> eval;
};
CorpusSplit split_by_chapter(std::vector<Utterance> corpus, int eval_chapters = 1);

// Whitespace tokenizer used for subwords.
std::vector<std::string> tokenize(const std::string& text);

}  // namespace msstyle
