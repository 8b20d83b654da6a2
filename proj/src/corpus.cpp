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

#include "msstyle/corpus.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <complex>
#include <cstdio>
#include <numeric>
#include <numbers>
#include <sstream>

#include "msstyle/errors.hpp"
#include "msstyle/nn.hpp"

namespace msstyle {

void MelConfig::validate() const {
  MSSTYLE_REQUIRE(sample_rate > 0.0, "mel config: sample_rate must be positive");
  MSSTYLE_REQUIRE(hop_size > 0 && hop_size <= frame_size,
                  "mel config: need 0 < hop_size <= frame_size");
  MSSTYLE_REQUIRE(n_mels >= 1, "mel config: n_mels must be >= 1");
  MSSTYLE_REQUIRE(fmin >= 0.0 && fmax > fmin && fmax <= sample_rate / 2.0,
                  "mel config: need 0 <= fmin < fmax <= sample_rate/2");
}

int AlignmentMap::total_frames() const {
  int total = 0;
  for (int d : phoneme_durations) total += d;
  return total;
}

std::vector<int> AlignmentMap::subword_of_phoneme() const {
  std::vector<int> owner(phoneme_durations.size(), -1);
  for (std::size_t s = 0; s < subword_to_phoneme.size(); ++s) {
    for (int p = subword_to_phoneme[s].first; p <= subword_to_phoneme[s].last; ++p) {
      owner[static_cast<std::size_t>(p)] = static_cast<int>(s);
    }
  }
  return owner;
}

void AlignmentMap::validate() const {
  for (int d : phoneme_durations) {
    if (d < 0) throw InvalidInputError("alignment: negative phoneme duration");
  }
  if (subword_to_phoneme.empty()) {
    if (!phoneme_durations.empty())
      throw InvalidInputError("alignment: phonemes present but no subword spans");
    return;
  }
  int expected = 0;
  for (const PhonemeSpan& span : subword_to_phoneme) {
    if (span.first != expected || span.last < span.first) {
      throw InvalidInputError("alignment: subword spans must be contiguous and non-empty");
    }
    expected = span.last + 1;
  }
  if (expected != num_phonemes()) {
    throw InvalidInputError("alignment: subword spans do not cover all phonemes");
  }
}

void Utterance::validate() const {
  auto fail = [this](const std::string& what) {
    throw InvalidInputError("utterance '" + id + "': " + what);
  };
  try {
    alignment.validate();
  } catch (const InvalidInputError& e) {
    fail(e.what());
  }
  if (!phonemes.empty() && phonemes.size() != alignment.phoneme_durations.size())
    fail("phoneme count differs from alignment");
  if (!subwords.empty() && subwords.size() != alignment.subword_to_phoneme.size())
    fail("subword count differs from alignment");
  const auto frames = mel.num_frames();
  if (!padding && alignment.total_frames() != frames)
    fail("sum of durations " + std::to_string(alignment.total_frames()) +
         " != mel frames " + std::to_string(frames));
  if (pitch.size() != frames || energy.size() != frames)
    fail("pitch/energy length differs from mel frame count");
  if (!mel.frames.allFinite()) fail("mel contains non-finite values");
}

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

}  // namespace

Matrix mel_filterbank(const MelConfig& config) {
  const int bins = config.frame_size / 2 + 1;
  const double lo = hz_to_mel(config.fmin);
  const double hi = hz_to_mel(config.fmax);
  std::vector<double> edges(static_cast<std::size_t>(config.n_mels + 2));
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) /
                                  static_cast<double>(config.n_mels + 1));
  }
  Matrix fb = Matrix::Zero(config.n_mels, bins);
  for (int m = 0; m < config.n_mels; ++m) {
    const double left = edges[static_cast<std::size_t>(m)];
    const double center = edges[static_cast<std::size_t>(m + 1)];
    const double right = edges[static_cast<std::size_t>(m + 2)];
    for (int k = 0; k < bins; ++k) {
      const double f = config.sample_rate * k / config.frame_size;
      double w = 0.0;
      if (f > left && f <= center) {
        w = (f - left) / (center - left);
      } else if (f > center && f < right) {
        w = (right - f) / (right - center);
      }
      fb(m, k) = w;
    }
  }
  return fb;
}

std::vector<double> hann_window(int size) {
  std::vector<double> w(static_cast<std::size_t>(size));
  for (int i = 0; i < size; ++i) {
    w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / size);
  }
  return w;
}

namespace {

// numpy-style "reflect" index for any offset, bouncing as often as needed.
std::size_t reflect_index(long i, long n) {
  if (n == 1) return 0;
  const long period = 2 * (n - 1);
  long r = i % period;
  if (r < 0) r += period;
  return static_cast<std::size_t>(r < n ? r : period - r);
}

void check_waveform(std::span<const double> waveform) {
  if (waveform.empty()) throw InvalidInputError("waveform is empty");
  for (double s : waveform) {
    if (!std::isfinite(s)) throw InvalidInputError("waveform contains non-finite samples");
  }
}

// Centered, reflect-padded frame `t`.
void fill_frame(std::span<const double> waveform, const MelConfig& config, long t,
                std::vector<double>& out) {
  const long n = static_cast<long>(waveform.size());
  const long start = t * config.hop_size - config.frame_size / 2;
  out.resize(static_cast<std::size_t>(config.frame_size));
  for (long i = 0; i < config.frame_size; ++i) {
    out[static_cast<std::size_t>(i)] = waveform[reflect_index(start + i, n)];
  }
}

}  // namespace

std::vector<double> mel_band_centers(const MelConfig& config) {
  const double lo = hz_to_mel(config.fmin);
  const double hi = hz_to_mel(config.fmax);
  std::vector<double> centers(static_cast<std::size_t>(config.n_mels));
  for (int m = 0; m < config.n_mels; ++m) {
    centers[static_cast<std::size_t>(m)] =
        mel_to_hz(lo + (hi - lo) * static_cast<double>(m + 1) /
                           static_cast<double>(config.n_mels + 1));
  }
  return centers;
}

MelSpectrogram compute_mel(std::span<const double> waveform, const MelConfig& config) {
  config.validate();
  check_waveform(waveform);
  const long frames = static_cast<long>(waveform.size()) / config.hop_size + 1;
  const Matrix fb = mel_filterbank(config);
  const std::vector<double> window = hann_window(config.frame_size);

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> frame;
  std::vector<std::complex<double>> spectrum;
  Vector magnitude(config.frame_size / 2 + 1);

  MelSpectrogram mel;
  mel.config = config;
  mel.frames.resize(frames, config.n_mels);
  for (long t = 0; t < frames; ++t) {
    fill_frame(waveform, config, t, frame);
    for (std::size_t i = 0; i < frame.size(); ++i) frame[i] *= window[i];
    fft.fwd(spectrum, frame);
    for (Eigen::Index k = 0; k < magnitude.size(); ++k) {
      magnitude(k) = std::abs(spectrum[static_cast<std::size_t>(k)]);
    }
    const Vector bands = fb * magnitude;
    for (int m = 0; m < config.n_mels; ++m) {
      const double v = bands(m) > 0.0 ? std::log(bands(m)) : config.log_floor;
      mel.frames(t, m) = std::max(v, config.log_floor);
    }
  }
  return mel;
}

Vector frame_energy(const Matrix& log_mel) {
  return log_mel.array().exp().matrix().rowwise().norm();
}

Vector estimate_pitch(std::span<const double> waveform, const MelConfig& config, double min_f0,
                      double max_f0) {
  config.validate();
  check_waveform(waveform);
  const long frames = static_cast<long>(waveform.size()) / config.hop_size + 1;
  const int min_lag = std::max(1, static_cast<int>(std::floor(config.sample_rate / max_f0)));
  const int max_lag = std::min(config.frame_size - 1,
                               static_cast<int>(std::ceil(config.sample_rate / min_f0)));
  Vector f0 = Vector::Zero(frames);
  std::vector<double> frame;
  for (long t = 0; t < frames; ++t) {
    fill_frame(waveform, config, t, frame);
    const double m = std::accumulate(frame.begin(), frame.end(), 0.0) / frame.size();
    for (double& s : frame) s -= m;
    double r0 = 0.0;
    for (double s : frame) r0 += s * s;
    if (r0 / frame.size() < 1e-8) continue;  // silence
    std::vector<double> corr(static_cast<std::size_t>(max_lag + 1), 0.0);
    for (int lag = min_lag; lag <= max_lag; ++lag) {
      double acc = 0.0;
      for (std::size_t i = 0; i + lag < frame.size(); ++i) acc += frame[i] * frame[i + lag];
      // Unbiased normalisation so long lags are not penalised.
      corr[static_cast<std::size_t>(lag)] =
          acc / r0 * static_cast<double>(frame.size()) / static_cast<double>(frame.size() - lag);
    }
    const double peak = *std::max_element(corr.begin() + min_lag, corr.end());
    if (peak < 0.3) continue;
    // Shortest lag within 10% of the peak avoids octave-down errors.
    int best = min_lag;
    for (int lag = min_lag; lag <= max_lag; ++lag) {
      const double c = corr[static_cast<std::size_t>(lag)];
      const bool local_max = lag > min_lag && lag < max_lag &&
                             c >= corr[static_cast<std::size_t>(lag - 1)] &&
                             c >= corr[static_cast<std::size_t>(lag + 1)];
      if (local_max && c >= 0.9 * peak) {
        best = lag;
        break;
      }
    }
    f0(t) = config.sample_rate / best;
  }
  return f0;
}

Vector average_by_duration(const Vector& frame_values, std::span<const int> durations) {
  long total = 0;
  for (int d : durations) {
    MSSTYLE_REQUIRE(d >= 0, "average_by_duration: negative duration");
    total += d;
  }
  MSSTYLE_REQUIRE(total == frame_values.size(),
                  "average_by_duration: durations sum to " + std::to_string(total) +
                      " but there are " + std::to_string(frame_values.size()) + " frames");
  Vector out = Vector::Zero(static_cast<Eigen::Index>(durations.size()));
  Eigen::Index at = 0;
  for (std::size_t i = 0; i < durations.size(); ++i) {
    const int d = durations[i];
    if (d > 0) {
      // Shifted mean: exact for constant segments.
      const double first = frame_values(at);
      out(static_cast<Eigen::Index>(i)) =
          first + (frame_values.segment(at, d).array() - first).sum() / d;
    }
    at += d;
  }
  return out;
}

Vector expand_by_duration(const Vector& phoneme_values, std::span<const int> durations) {
  MSSTYLE_REQUIRE(phoneme_values.size() == static_cast<Eigen::Index>(durations.size()),
                  "expand_by_duration: length mismatch");
  long total = 0;
  for (int d : durations) total += std::max(d, 0);
  Vector out(total);
  Eigen::Index at = 0;
  for (std::size_t i = 0; i < durations.size(); ++i) {
    for (int k = 0; k < durations[i]; ++k) out(at++) = phoneme_values(static_cast<Eigen::Index>(i));
  }
  return out;
}

std::vector<FrameRange> subword_frame_boundaries(const AlignmentMap& alignment) {
  std::vector<int> prefix(alignment.phoneme_durations.size() + 1, 0);
  for (std::size_t i = 0; i < alignment.phoneme_durations.size(); ++i) {
    prefix[i + 1] = prefix[i] + alignment.phoneme_durations[i];
  }
  std::vector<FrameRange> ranges;
  ranges.reserve(alignment.subword_to_phoneme.size());
  for (const PhonemeSpan& span : alignment.subword_to_phoneme) {
    MSSTYLE_REQUIRE(span.first >= 0 && span.last < alignment.num_phonemes(),
                    "subword span references a phoneme out of range");
    ranges.push_back({prefix[static_cast<std::size_t>(span.first)],
                      prefix[static_cast<std::size_t>(span.last + 1)]});
  }
  return ranges;
}

Matrix mel_segment(const MelSpectrogram& mel, FrameRange range) {
  MSSTYLE_REQUIRE(range.begin >= 0 && range.end <= mel.num_frames(),
                  "mel_segment: range outside the spectrogram");
  if (range.empty()) return Matrix::Constant(1, mel.frames.cols(), mel.config.log_floor);
  return mel.frames.middleRows(range.begin, range.size());
}

std::shared_ptr<const Utterance> make_padding_utterance(const MelConfig& config) {
  auto pad = std::make_shared<Utterance>();
  pad->id = "<pad>";
  pad->padding = true;
  pad->mel.config = config;
  pad->mel.frames = Matrix::Constant(1, config.n_mels, config.log_floor);
  pad->pitch = Vector::Zero(1);
  pad->energy = frame_energy(pad->mel.frames);
  pad->order_index = -1;
  return pad;
}

ContextWindow build_context_window(std::span<const Utterance> corpus, int index, int radius,
                                   std::shared_ptr<const Utterance> pad) {
  MSSTYLE_REQUIRE(index >= 0 && static_cast<std::size_t>(index) < corpus.size(),
                  "build_context_window: index " + std::to_string(index) + " out of range");
  MSSTYLE_REQUIRE(radius >= 0, "build_context_window: negative radius");
  ContextWindow window;
  window.radius = radius;
  window.pad = std::move(pad);
  const int n = static_cast<int>(corpus.size());
  for (int offset = -radius; offset <= radius; ++offset) {
    const int j = index + offset;
    window.sentences.push_back(j >= 0 && j < n ? &corpus[static_cast<std::size_t>(j)]
                                               : window.pad.get());
  }
  return window;
}

ContextWindow build_context_window(std::span<const Utterance> corpus, int index, int radius) {
  MSSTYLE_REQUIRE(!corpus.empty(), "build_context_window: empty corpus");
  return build_context_window(corpus, index, radius,
                              make_padding_utterance(corpus[0].mel.config));
}

ContextWindow build_chapter_window(std::span<const Utterance> corpus, int index, int radius,
                                   std::shared_ptr<const Utterance> pad) {
  MSSTYLE_REQUIRE(index >= 0 && static_cast<std::size_t>(index) < corpus.size(),
                  "build_chapter_window: index " + std::to_string(index) + " out of range");
  const int chapter = corpus[static_cast<std::size_t>(index)].chapter;
  std::size_t lo = static_cast<std::size_t>(index);
  std::size_t hi = lo + 1;
  while (lo > 0 && corpus[lo - 1].chapter == chapter) --lo;
  while (hi < corpus.size() && corpus[hi].chapter == chapter) ++hi;
  return build_context_window(corpus.subspan(lo, hi - lo), index - static_cast<int>(lo), radius,
                              std::move(pad));
}

Matrix concatenated_window_mel(const ContextWindow& window, int max_frames) {
  Eigen::Index total = 0;
  Eigen::Index current_start = 0;
  for (std::size_t i = 0; i < window.size(); ++i) {
    if (static_cast<int>(i) == window.radius) current_start = total;
    total += window.at(i).mel.num_frames();
  }
  const Eigen::Index width = window.current().mel.frames.cols();
  Matrix all(total, width);
  Eigen::Index at = 0;
  for (std::size_t i = 0; i < window.size(); ++i) {
    const Matrix& m = window.at(i).mel.frames;
    MSSTYLE_REQUIRE(m.cols() == width, "concatenated_window_mel: n_mels differs across window");
    all.middleRows(at, m.rows()) = m;
    at += m.rows();
  }
  if (max_frames <= 0 || total <= max_frames) return all;
  const Eigen::Index center = current_start + window.current().mel.num_frames() / 2;
  const Eigen::Index start =
      std::clamp<Eigen::Index>(center - max_frames / 2, 0, total - max_frames);
  return all.middleRows(start, max_frames);
}

std::vector<std::string> tokenize(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> tokens;
  for (std::string tok; in >> tok;) tokens.push_back(tok);
  return tokens;
}

namespace {

struct ToyWord {
  const char* text;
  std::vector<int> phonemes;
};

const std::vector<ToyWord>& toy_words() {
  // Phoneme ids index toy_phoneme_inventory().
  static const std::vector<ToyWord> words = {
      {"ba", {5, 0}},        {"di", {6, 2}},    {"kolu", {7, 3, 8, 4}}, {"ma", {9, 0}},
      {"ne", {10, 1}},       {"sima", {11, 2, 9, 0}}, {"lo", {8, 3}},   {"kub", {7, 4, 5}},
      {"e", {1}},            {"dan", {6, 0, 10}},
  };
  return words;
}

}  // namespace

const std::vector<std::string>& toy_phoneme_inventory() {
  static const std::vector<std::string> inventory = {"a", "e", "i", "o", "u", "b",
                                                     "d", "k", "l", "m", "n", "s"};
  return inventory;
}

std::vector<ToyUtterance> generate_toy_corpus_with_audio(std::uint64_t seed, int n_utterances,
                                                         const ToyCorpusOptions& shape) {
  MSSTYLE_REQUIRE(n_utterances >= 1, "generate_toy_corpus: need at least one utterance");
  MSSTYLE_REQUIRE(shape.subwords_per_utterance >= 1, "toy corpus: subwords_per_utterance >= 1");
  MSSTYLE_REQUIRE(shape.min_duration >= 1 && shape.max_duration >= shape.min_duration,
                  "toy corpus: bad duration range");
  MSSTYLE_REQUIRE(shape.utterances_per_chapter >= 1, "toy corpus: utterances_per_chapter >= 1");
  shape.mel.validate();

  const auto& words = toy_words();
  const auto& inventory = toy_phoneme_inventory();
  Rng root(seed);
  std::vector<ToyUtterance> out;
  out.reserve(static_cast<std::size_t>(n_utterances));

  double chapter_pitch = 0.0;
  double chapter_gain = 0.0;
  for (int u = 0; u < n_utterances; ++u) {
    const int chapter = u / shape.utterances_per_chapter;
    Rng rng = root.fork("utterance/" + std::to_string(u));
    if (u % shape.utterances_per_chapter == 0) {
      Rng crng = root.fork("chapter/" + std::to_string(chapter));
      chapter_pitch = 110.0 + 70.0 * crng.uniform();
      chapter_gain = 0.4 + 0.5 * crng.uniform();
    }
    // Slow narrative drift inside a chapter plus a per-sentence jitter.
    const double position = static_cast<double>(u % shape.utterances_per_chapter);
    const double sentence_pitch =
        chapter_pitch * (1.0 + 0.08 * std::sin(0.9 * position) + 0.05 * rng.uniform(-1.0, 1.0));
    const double sentence_gain = chapter_gain * (0.8 + 0.4 * rng.uniform());
    const int emphasis = rng.uniform_int(0, shape.subwords_per_utterance - 1);

    ToyUtterance toy;
    Utterance& utt = toy.utterance;
    char id[32];
    std::snprintf(id, sizeof(id), "toy_%04d", u);
    utt.id = id;
    utt.order_index = u;
    utt.chapter = chapter;

    std::vector<int> phoneme_ids;
    std::vector<double> phoneme_emphasis;
    for (int s = 0; s < shape.subwords_per_utterance; ++s) {
      const ToyWord& w = words[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<int>(words.size()) - 1))];
      utt.subwords.emplace_back(w.text);
      const int first = static_cast<int>(phoneme_ids.size());
      for (int p : w.phonemes) {
        phoneme_ids.push_back(p);
        utt.phonemes.push_back(inventory[static_cast<std::size_t>(p)]);
        const bool stressed = s == emphasis;
        phoneme_emphasis.push_back(stressed ? 1.0 : 0.0);
        utt.alignment.phoneme_durations.push_back(
            rng.uniform_int(shape.min_duration, shape.max_duration) + (stressed ? 1 : 0));
      }
      utt.alignment.subword_to_phoneme.push_back({first, static_cast<int>(phoneme_ids.size()) - 1});
    }
    for (std::size_t s = 0; s < utt.subwords.size(); ++s) {
      utt.text += (s ? " " : "") + utt.subwords[s];
    }

    const int frames = utt.alignment.total_frames();
    const MelConfig& mc = shape.mel;
    // Per-frame targets.
    std::vector<double> f0(static_cast<std::size_t>(frames));
    std::vector<double> amp(static_cast<std::size_t>(frames));
    std::vector<double> formant(static_cast<std::size_t>(frames));
    int t = 0;
    for (std::size_t p = 0; p < phoneme_ids.size(); ++p) {
      for (int k = 0; k < utt.alignment.phoneme_durations[p]; ++k, ++t) {
        const double declination = 1.0 - 0.15 * static_cast<double>(t) / frames;
        const double stress = 1.0 + 0.25 * phoneme_emphasis[p];
        f0[static_cast<std::size_t>(t)] = sentence_pitch * declination * stress;
        amp[static_cast<std::size_t>(t)] =
            0.25 * sentence_gain * (1.0 + 0.6 * phoneme_emphasis[p]);
        formant[static_cast<std::size_t>(t)] = 300.0 + 180.0 * phoneme_ids[p];
      }
    }
    // floor(N / hop) + 1 == frames.
    const long samples = static_cast<long>(frames - 1) * mc.hop_size + mc.hop_size / 2;
    toy.waveform.resize(static_cast<std::size_t>(std::max(samples, 1L)));
    double voice_phase = 0.0;
    double formant_phase = 0.0;
    const double two_pi = 2.0 * std::numbers::pi;
    for (std::size_t n = 0; n < toy.waveform.size(); ++n) {
      const auto frame = std::min<long>(
          frames - 1, (static_cast<long>(n) + mc.hop_size / 2) / mc.hop_size);
      const auto fi = static_cast<std::size_t>(frame);
      voice_phase = std::fmod(voice_phase + two_pi * f0[fi] / mc.sample_rate, two_pi);
      formant_phase = std::fmod(formant_phase + two_pi * formant[fi] / mc.sample_rate, two_pi);
      toy.waveform[n] = amp[fi] * (std::sin(voice_phase) + 0.5 * std::sin(2.0 * voice_phase) +
                                   0.25 * std::sin(3.0 * voice_phase) +
                                   0.4 * std::sin(formant_phase));
    }
    utt.mel = compute_mel(toy.waveform, mc);
    MSSTYLE_REQUIRE(utt.mel.num_frames() == frames, "toy corpus: frame count mismatch");
    utt.pitch = Eigen::Map<const Vector>(f0.data(), frames);
    utt.energy = frame_energy(utt.mel.frames);
    utt.validate();
    out.push_back(std::move(toy));
  }
  return out;
}

std::vector<Utterance> generate_toy_corpus(std::uint64_t seed, int n_utterances,
                                           const ToyCorpusOptions& shape) {
  std::vector<Utterance> out;
  for (ToyUtterance& t : generate_toy_corpus_with_audio(seed, n_utterances, shape)) {
    out.push_back(std::move(t.utterance));
  }
  return out;
}

CorpusSplit split_by_chapter(std::vector<Utterance> corpus, int eval_chapters) {
  std::stable_sort(corpus.begin(), corpus.end(), [](const Utterance& a, const Utterance& b) {
    return a.order_index < b.order_index;
  });
  CorpusSplit split;
  if (corpus.empty()) return split;
  std::vector<int> chapters;
  for (const Utterance& u : corpus) {
    if (chapters.empty() || chapters.back() != u.chapter) chapters.push_back(u.chapter);
  }
  // Keep at least one chapter for training.
  const int held_out = std::clamp(eval_chapters, 0, static_cast<int>(chapters.size()) - 1);
  const std::vector<int> eval_set(chapters.end() - held_out, chapters.end());
  for (Utterance& u : corpus) {
    const bool is_eval = std::find(eval_set.begin(), eval_set.end(), u.chapter) != eval_set.end();
    (is_eval ? split.eval : split.train).push_back(std::move(u));
  }
  return split;
}

}  // namespace msstyle
