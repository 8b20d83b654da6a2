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

#include "msstyle/acoustic.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "msstyle/errors.hpp"

namespace msstyle {

using ad::Graph;
using ad::Var;

PhonemeInventory::PhonemeInventory(std::vector<std::string> symbols) : symbols_(std::move(symbols)) {
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    MSSTYLE_REQUIRE(index_.emplace(symbols_[i], static_cast<int>(i)).second,
                    "phoneme inventory: duplicate symbol '" + symbols_[i] + "'");
  }
}

PhonemeInventory PhonemeInventory::from_corpus(std::span<const Utterance> corpus) {
  std::set<std::string> all(toy_phoneme_inventory().begin(), toy_phoneme_inventory().end());
  all.insert("sil");
  for (const Utterance& u : corpus) all.insert(u.phonemes.begin(), u.phonemes.end());
  return PhonemeInventory(std::vector<std::string>(all.begin(), all.end()));
}

int PhonemeInventory::id(const std::string& symbol) const {
  auto it = index_.find(symbol);
  MSSTYLE_REQUIRE(it != index_.end(), "phoneme '" + symbol + "' is not in the inventory");
  return it->second;
}

void PhonemeSequence::validate() const {
  MSSTYLE_REQUIRE(!ids.empty(), "phoneme sequence is empty");
  MSSTYLE_REQUIRE(ids.size() == subword_of.size(), "phoneme sequence: subword map length differs");
  MSSTYLE_REQUIRE(subword_of.front() == 0, "phoneme sequence: subword map must start at 0");
  for (std::size_t i = 1; i < subword_of.size(); ++i) {
    const int step = subword_of[i] - subword_of[i - 1];
    MSSTYLE_REQUIRE(step == 0 || step == 1, "phoneme sequence: subword map must be onto and non-decreasing");
  }
}

PhonemeSequence phoneme_sequence(const Utterance& utt, const PhonemeInventory& inventory) {
  PhonemeSequence seq;
  for (const std::string& p : utt.phonemes) seq.ids.push_back(inventory.id(p));
  seq.subword_of = utt.alignment.subword_of_phoneme();
  seq.validate();
  return seq;
}

VarianceTargets variance_targets(const Utterance& utt) {
  VarianceTargets t;
  t.durations = utt.alignment.phoneme_durations;
  t.pitch = average_by_duration(utt.pitch, t.durations);
  t.energy = average_by_duration(utt.energy, t.durations);
  return t;
}

namespace {

void moments(const std::vector<double>& xs, double& mean, double& stddev, double& lo, double& hi) {
  if (xs.empty()) return;
  double sum = 0.0;
  for (double x : xs) sum += x;
  mean = sum / static_cast<double>(xs.size());
  double sq = 0.0;
  for (double x : xs) sq += (x - mean) * (x - mean);
  stddev = std::max(std::sqrt(sq / static_cast<double>(xs.size())), 1e-6);
  lo = *std::min_element(xs.begin(), xs.end());
  hi = *std::max_element(xs.begin(), xs.end());
  if (hi <= lo) hi = lo + 1e-6;
}

}  // namespace

VarianceStats VarianceStats::from_corpus(std::span<const Utterance> corpus) {
  std::vector<double> pitch, energy;
  for (const Utterance& u : corpus) {
    const VarianceTargets t = variance_targets(u);
    for (std::size_t p = 0; p < t.durations.size(); ++p) {
      if (t.durations[p] == 0) continue;
      const auto i = static_cast<Eigen::Index>(p);
      if (t.pitch(i) > 0.0) pitch.push_back(t.pitch(i));
      energy.push_back(t.energy(i));
    }
  }
  VarianceStats s;
  moments(pitch, s.pitch_mean, s.pitch_std, s.pitch_min, s.pitch_max);
  moments(energy, s.energy_mean, s.energy_std, s.energy_min, s.energy_max);
  return s;
}

Vector VarianceStats::normalize_pitch(const Vector& hz) const {
  return (hz.array() - pitch_mean) / pitch_std;
}
Vector VarianceStats::normalize_energy(const Vector& e) const {
  return (e.array() - energy_mean) / energy_std;
}
Vector VarianceStats::denormalize_pitch(const Vector& z) const {
  return z.array() * pitch_std + pitch_mean;
}
Vector VarianceStats::denormalize_energy(const Vector& z) const {
  return z.array() * energy_std + energy_mean;
}

Matrix VarianceStats::to_matrix() const {
  Matrix m(1, 8);
  m << pitch_mean, pitch_std, pitch_min, pitch_max, energy_mean, energy_std, energy_min, energy_max;
  return m;
}

VarianceStats VarianceStats::from_matrix(const Matrix& m) {
  MSSTYLE_REQUIRE(m.rows() == 1 && m.cols() == 8, "variance stats: expected a 1 x 8 record");
  VarianceStats s;
  s.pitch_mean = m(0, 0);
  s.pitch_std = m(0, 1);
  s.pitch_min = m(0, 2);
  s.pitch_max = m(0, 3);
  s.energy_mean = m(0, 4);
  s.energy_std = m(0, 5);
  s.energy_min = m(0, 6);
  s.energy_max = m(0, 7);
  return s;
}

std::vector<int> bucketize(const Vector& values, double lo, double hi, int bins) {
  MSSTYLE_REQUIRE(bins >= 1 && hi > lo, "bucketize: invalid range");
  std::vector<int> out(static_cast<std::size_t>(values.size()));
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const double u = (values(i) - lo) / (hi - lo) * bins;
    const double clamped = std::clamp(std::floor(u), 0.0, static_cast<double>(bins - 1));
    out[static_cast<std::size_t>(i)] = std::isfinite(u) ? static_cast<int>(clamped) : 0;
  }
  return out;
}

std::vector<int> regulate_indices(std::span<const int> durations) {
  std::vector<int> idx;
  for (std::size_t p = 0; p < durations.size(); ++p) {
    MSSTYLE_REQUIRE(durations[p] >= 0, "length regulator: negative duration");
    idx.insert(idx.end(), static_cast<std::size_t>(durations[p]), static_cast<int>(p));
  }
  return idx;
}

std::vector<int> durations_from_log(const Vector& log_durations) {
  MSSTYLE_REQUIRE(log_durations.size() >= 1, "durations: empty prediction");
  std::vector<int> d(static_cast<std::size_t>(log_durations.size()));
  int total = 0;
  for (Eigen::Index i = 0; i < log_durations.size(); ++i) {
    const double frames = std::exp(std::min(log_durations(i), 20.0)) - 1.0;
    const int r = std::isfinite(frames) ? static_cast<int>(std::max(0.0, std::round(frames))) : 0;
    d[static_cast<std::size_t>(i)] = r;
    total += r;
  }
  if (total == 0) {
    Eigen::Index best = 0;
    log_durations.maxCoeff(&best);
    d[static_cast<std::size_t>(best)] = 1;
  }
  return d;
}

FftBlock FftBlock::create(ParamStore& store, const std::string& name, const AcousticConfig& c,
                          Rng& rng) {
  FftBlock b;
  b.attention = nn::MultiHeadSelfAttention::create(store, name + ".attention", c.model_width, c.heads, rng);
  b.attention_norm = nn::LayerNorm::create(store, name + ".attention_norm", c.model_width);
  b.conv1 = nn::Conv1d::create(store, name + ".conv1", c.model_width, c.ffn_hidden, c.ffn_kernel, rng);
  b.conv2 = nn::Conv1d::create(store, name + ".conv2", c.ffn_hidden, c.model_width, 1, rng);
  b.ffn_norm = nn::LayerNorm::create(store, name + ".ffn_norm", c.model_width);
  return b;
}

Var FftBlock::operator()(Graph& g, const Var& x) const {
  Var h = attention_norm(g, x + attention(g, x));
  return ffn_norm(g, h + conv2(g, ad::relu(conv1(g, h))));
}

VariancePredictor VariancePredictor::create(ParamStore& store, const std::string& name,
                                            const AcousticConfig& c, Rng& rng) {
  VariancePredictor v;
  v.conv1 = nn::Conv1d::create(store, name + ".conv1", c.model_width, c.variance_filter,
                               c.variance_kernel, rng);
  v.norm1 = nn::LayerNorm::create(store, name + ".norm1", c.variance_filter);
  v.conv2 = nn::Conv1d::create(store, name + ".conv2", c.variance_filter, c.variance_filter,
                               c.variance_kernel, rng);
  v.norm2 = nn::LayerNorm::create(store, name + ".norm2", c.variance_filter);
  v.output = nn::Linear::create(store, name + ".output", c.variance_filter, 1, rng);
  return v;
}

Var VariancePredictor::operator()(Graph& g, const Var& x) const {
  Var h = norm1(g, ad::relu(conv1(g, x)));
  h = norm2(g, ad::relu(conv2(g, h)));
  return output(g, h);
}

AcousticModel::AcousticModel(ParamStore& store, const ModelConfig& config, int vocabulary, Rng& rng)
    : width_(config.acoustic.model_width),
      n_mels_(config.mel.n_mels),
      bins_(config.acoustic.bins),
      max_phonemes_(config.acoustic.max_phonemes) {
  MSSTYLE_REQUIRE(vocabulary >= 1, "acoustic model: empty phoneme inventory");
  const AcousticConfig& c = config.acoustic;
  const std::string p = kPrefix;
  Rng r = rng.fork(p);
  embedding_ = &store.create(p + ".phoneme_embedding", r.normal_matrix(vocabulary, width_, 1.0));
  for (int i = 0; i < c.encoder_layers; ++i)
    encoder_.push_back(FftBlock::create(store, p + ".encoder" + std::to_string(i), c, r));
  if (config.extractor.style_width != width_) {
    style_projection_ = nn::Linear::create(store, p + ".style_projection",
                                           config.extractor.style_width, width_, r, false);
  }
  duration_ = VariancePredictor::create(store, p + ".duration", c, r);
  pitch_ = VariancePredictor::create(store, p + ".pitch", c, r);
  energy_ = VariancePredictor::create(store, p + ".energy", c, r);
  const double scale = 1.0 / std::sqrt(static_cast<double>(width_));
  pitch_embedding_ = &store.create(p + ".pitch_embedding", r.normal_matrix(bins_, width_, scale));
  energy_embedding_ = &store.create(p + ".energy_embedding", r.normal_matrix(bins_, width_, scale));
  for (int i = 0; i < c.decoder_layers; ++i)
    decoder_.push_back(FftBlock::create(store, p + ".decoder" + std::to_string(i), c, r));
  mel_output_ = nn::Linear::create(store, p + ".mel_output", width_, n_mels_, r);
}

Var AcousticModel::encode(Graph& g, const PhonemeSequence& seq) const {
  MSSTYLE_REQUIRE(!seq.ids.empty(), "encoder: empty phoneme sequence");
  MSSTYLE_REQUIRE(seq.num_phonemes() <= max_phonemes_, "encoder: sequence longer than max_phonemes");
  for (int id : seq.ids)
    MSSTYLE_REQUIRE(id >= 0 && id < embedding_->value.rows(), "encoder: phoneme id outside the inventory");
  Var x = ad::gather_rows(g.param(*embedding_), seq.ids) +
          g.constant(nn::sinusoid_positions(seq.num_phonemes(), width_));
  for (const FftBlock& block : encoder_) x = block(g, x);
  return x;
}

Var AcousticModel::project_style(Graph& g, const Var& style) const {
  return style_projection_ ? (*style_projection_)(g, style) : style;
}

Var AcousticModel::inject(Graph& g, const Var& hidden, const Var& style,
                          std::span<const int> subword_of) const {
  MSSTYLE_REQUIRE(static_cast<Eigen::Index>(subword_of.size()) == hidden.rows(),
                  "inject_style: subword map length differs from phoneme count");
  for (int s : subword_of)
    MSSTYLE_REQUIRE(s >= 0 && s < style.rows(), "inject_style: subword index outside the style sequence");
  return hidden + ad::gather_rows(project_style(g, style), subword_of);
}

VarianceVars AcousticModel::adapt(Graph& g, const Var& hidden, const VarianceTargets* targets) const {
  const Eigen::Index n = hidden.rows();
  VarianceVars out;
  out.duration = duration_(g, hidden);
  out.pitch = pitch_(g, hidden);

  const VarianceStats& s = stats_;
  const double plo = (s.pitch_min - s.pitch_mean) / s.pitch_std;
  const double phi = (s.pitch_max - s.pitch_mean) / s.pitch_std;
  const double elo = (s.energy_min - s.energy_mean) / s.energy_std;
  const double ehi = (s.energy_max - s.energy_mean) / s.energy_std;

  Vector pitch_values;
  if (targets) {
    MSSTYLE_REQUIRE(static_cast<Eigen::Index>(targets->durations.size()) == n &&
                        targets->pitch.size() == n && targets->energy.size() == n,
                    "variance adaptor: target length differs from phoneme count");
    pitch_values = s.normalize_pitch(targets->pitch);
  } else {
    pitch_values = out.pitch.value().col(0);
  }
  Var h = hidden + ad::gather_rows(g.param(*pitch_embedding_), bucketize(pitch_values, plo, phi, bins_));
  out.energy = energy_(g, h);
  const Vector energy_values = targets ? s.normalize_energy(targets->energy) : Vector(out.energy.value().col(0));
  h = h + ad::gather_rows(g.param(*energy_embedding_), bucketize(energy_values, elo, ehi, bins_));

  out.durations = targets ? targets->durations : durations_from_log(out.duration.value().col(0));
  const std::vector<int> idx = regulate_indices(out.durations);
  MSSTYLE_REQUIRE(!idx.empty(), "length regulator: total duration is zero");
  out.expanded = ad::gather_rows(h, idx);
  return out;
}

Var AcousticModel::decode(Graph& g, const Var& expanded) const {
  MSSTYLE_REQUIRE(expanded.rows() >= 1, "decoder: no frames to decode");
  Var x = expanded + g.constant(nn::sinusoid_positions(expanded.rows(), width_));
  for (const FftBlock& block : decoder_) x = block(g, x);
  return mel_output_(g, x);
}

AcousticVars AcousticModel::forward(Graph& g, const PhonemeSequence& seq, const Var& style,
                                    const VarianceTargets* targets) const {
  seq.validate();
  AcousticVars out;
  out.hidden = inject(g, encode(g, seq), style, seq.subword_of);
  out.variance = adapt(g, out.hidden, targets);
  out.mel = decode(g, out.variance.expanded);
  return out;
}

AcousticLosses AcousticModel::losses(Graph& g, const AcousticVars& out, const VarianceTargets& targets,
                                     const Matrix& mel_target) const {
  MSSTYLE_REQUIRE(out.mel.rows() == mel_target.rows() && out.mel.cols() == mel_target.cols(),
                  "acoustic loss: predicted and target mel shapes differ");
  const auto n = static_cast<Eigen::Index>(targets.durations.size());
  Matrix log_d(n, 1);
  for (Eigen::Index i = 0; i < n; ++i)
    log_d(i, 0) = std::log(static_cast<double>(targets.durations[static_cast<std::size_t>(i)]) + 1.0);
  AcousticLosses l;
  l.mel = nn::l1_loss(out.mel, g.constant(mel_target));
  l.duration = nn::mse_loss(out.variance.duration, g.constant(log_d));
  l.pitch = nn::mse_loss(out.variance.pitch, g.constant(Matrix(stats_.normalize_pitch(targets.pitch))));
  l.energy = nn::mse_loss(out.variance.energy, g.constant(Matrix(stats_.normalize_energy(targets.energy))));
  l.total = l.mel + l.duration + l.pitch + l.energy;
  return l;
}

Matrix encode_phonemes(const PhonemeSequence& seq, const AcousticModel& model) {
  Graph g;
  return model.encode(g, seq).value();
}

Matrix inject_style(const Matrix& hidden, const Matrix& style, std::span<const int> subword_of,
                    const AcousticModel& model) {
  Graph g;
  return model.inject(g, g.constant(hidden), g.constant(style), subword_of).value();
}

VarianceResult variance_adapt(const Matrix& hidden, const VarianceTargets* targets,
                              const AcousticModel& model) {
  Graph g;
  const VarianceVars v = model.adapt(g, g.constant(hidden), targets);
  return {v.expanded.value(), v.duration.value().col(0), v.pitch.value().col(0),
          v.energy.value().col(0), v.durations};
}

Matrix decode_mel(const Matrix& expanded, const AcousticModel& model) {
  Graph g;
  return model.decode(g, g.constant(expanded)).value();
}

}  // namespace msstyle
