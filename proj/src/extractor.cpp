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

#include "msstyle/extractor.hpp"

#include <cmath>

#include "msstyle/errors.hpp"

namespace msstyle {

using ad::Graph;
using ad::Var;

const char* to_string(StyleLevel level) {
  switch (level) {
    case StyleLevel::kGlobal: return "global";
    case StyleLevel::kSentence: return "sentence";
    case StyleLevel::kSubword: return "subword";
  }
  return "?";
}

LevelMask LevelMask::up_to(StyleLevel level) {
  const int k = static_cast<int>(level);
  return {true, k >= 1, k >= 2};
}

Var combine_levels(const Var& global, const Var& sentence, const Var& subword) {
  return ad::add_row(subword, global + sentence);
}

Matrix combine_levels(const RowVector& global, const RowVector& sentence, const Matrix& subword) {
  const RowVector shared = global + sentence;
  return subword.rowwise() + shared;
}

ReferenceEncoder ReferenceEncoder::create(ParamStore& store, const std::string& prefix,
                                          const ExtractorConfig& config, int n_mels, Rng& rng) {
  ReferenceEncoder enc;
  enc.n_mels = n_mels;
  Eigen::Index channels = 1;
  Eigen::Index width = n_mels;
  for (std::size_t i = 0; i < config.conv_channels.size(); ++i) {
    enc.convs.push_back(nn::Conv2d::create(store, prefix + ".conv" + std::to_string(i + 1),
                                           channels, config.conv_channels[i], rng));
    channels = config.conv_channels[i];
    width = nn::Conv2d::out_extent(width);
  }
  enc.gru = nn::Gru::create(store, prefix + ".gru", width * channels, config.style_width, rng);
  return enc;
}

Var ReferenceEncoder::operator()(Graph& g, const Matrix& mel) const {
  MSSTYLE_REQUIRE(mel.rows() >= 1, "reference encoder: segment has no frames");
  MSSTYLE_REQUIRE(mel.cols() == n_mels, "reference encoder: wrong mel width");
  // Row t*n_mels + m holds mel(t, m): a one-channel (time x frequency) map.
  Matrix plane(mel.rows() * mel.cols(), 1);
  for (Eigen::Index t = 0; t < mel.rows(); ++t)
    for (Eigen::Index m = 0; m < mel.cols(); ++m) plane(t * mel.cols() + m, 0) = mel(t, m);
  Var x = g.constant(std::move(plane));
  Eigen::Index height = mel.rows();
  Eigen::Index width = mel.cols();
  for (const nn::Conv2d& conv : convs) {
    x = ad::relu(conv(g, x, height, width));
    height = nn::Conv2d::out_extent(height);
    width = nn::Conv2d::out_extent(width);
  }
  Var states = gru(g, ad::fold_rows(x, width));
  return ad::slice_rows(states, states.rows() - 1, 1);
}

StyleTokenLayer StyleTokenLayer::create(ParamStore& store, const std::string& prefix,
                                        const ExtractorConfig& config, Rng& rng) {
  StyleTokenLayer layer;
  layer.heads = config.heads;
  const Eigen::Index d = config.style_width;
  layer.tokens = &store.create(prefix + ".tokens", rng.normal_matrix(config.tokens, d, 1.0));
  layer.query = nn::Linear::create(store, prefix + ".query", d, d, rng, false);
  layer.key = nn::Linear::create(store, prefix + ".key", d, d, rng, false);
  layer.value = nn::Linear::create(store, prefix + ".value", d, d, rng, false);
  return layer;
}

Var StyleTokenLayer::operator()(Graph& g, const Var& residual, std::vector<Matrix>* weights) const {
  MSSTYLE_REQUIRE(residual.cols() == tokens->value.cols(), "style tokens: residual width mismatch");
  Var bank = ad::tanh(g.param(*tokens));
  Var keys = key(g, bank);
  Var values = value(g, bank);
  Var q = query(g, residual);
  const Eigen::Index width = q.cols() / heads;
  const double temperature = 1.0 / std::sqrt(static_cast<double>(width));
  std::vector<Var> per_head;
  if (weights) weights->clear();
  for (int h = 0; h < heads; ++h) {
    Var logits = ad::scale(ad::matmul(ad::slice_cols(q, h * width, width),
                                      ad::transpose(ad::slice_cols(keys, h * width, width))),
                           temperature);
    Var w = ad::softmax_rows(logits);
    if (weights) weights->push_back(w.value());
    per_head.push_back(ad::matmul(w, ad::slice_cols(values, h * width, width)));
  }
  return heads == 1 ? per_head.front() : ad::concat_cols(per_head);
}

Matrix StyleTokenLayer::value_projections() const {
  return tokens->value.array().tanh().matrix() * value.weight->value;
}

Matrix MultiScaleStyle::subword_matrix() const {
  Matrix m(static_cast<Eigen::Index>(subword.size()), global.width());
  for (std::size_t i = 0; i < subword.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = subword[i].vector;
  return m;
}

std::string StyleExtractor::prefix(StyleLevel l) {
  return std::string("extractor.") + to_string(l);
}

StyleExtractor::StyleExtractor(ParamStore& store, const ModelConfig& config, Rng& rng)
    : style_width_(config.extractor.style_width), max_global_frames_(config.max_global_frames) {
  for (StyleLevel l : {StyleLevel::kGlobal, StyleLevel::kSentence, StyleLevel::kSubword}) {
    Rng level_rng = rng.fork(prefix(l));
    ExtractorLevel& level = levels_[static_cast<int>(l)];
    level.encoder = ReferenceEncoder::create(store, prefix(l), config.extractor,
                                             config.mel.n_mels, level_rng);
    level.tokens = StyleTokenLayer::create(store, prefix(l) + ".style_tokens", config.extractor,
                                           level_rng);
  }
}

ExtractedVars StyleExtractor::forward(Graph& g, const ContextWindow& window,
                                      std::span<const FrameRange> boundaries,
                                      LevelMask mask) const {
  const Utterance& current = window.current();
  MSSTYLE_REQUIRE(static_cast<int>(boundaries.size()) == current.alignment.num_subwords(),
                  "extractor: boundary count differs from subword count");
  MSSTYLE_REQUIRE(!boundaries.empty(), "extractor: sentence has no subwords");
  const auto n = static_cast<Eigen::Index>(boundaries.size());
  const Var zero_row = g.constant(Matrix::Zero(1, style_width_));
  const Var zero_rows = g.constant(Matrix::Zero(n, style_width_));

  ExtractedVars out;
  const ExtractorLevel& lg = level(StyleLevel::kGlobal);
  out.ref_global = lg.encoder(g, concatenated_window_mel(window, max_global_frames_));
  out.style_global = lg.tokens(g, out.ref_global);

  out.ref_sentence = zero_row;
  out.style_sentence = zero_row;
  out.ref_subword = zero_rows;
  out.style_subword = zero_rows;
  if (mask.sentence) {
    const ExtractorLevel& ls = level(StyleLevel::kSentence);
    out.ref_sentence = ls.encoder(g, current.mel.frames);
    out.style_sentence = ls.tokens(g, out.ref_sentence - out.ref_global);
  }
  if (mask.sentence && mask.subword) {
    const ExtractorLevel& lw = level(StyleLevel::kSubword);
    std::vector<Var> refs;
    std::vector<Var> styles;
    for (const FrameRange& range : boundaries) {
      Var ref = lw.encoder(g, mel_segment(current.mel, range));
      refs.push_back(ref);
      styles.push_back(lw.tokens(g, ref - out.ref_sentence));
    }
    out.ref_subword = ad::concat_rows(refs);
    out.style_subword = ad::concat_rows(styles);
  }
  if (!mask.global) out.style_global = zero_row;
  out.combined = combine_levels(out.style_global, out.style_sentence, out.style_subword);
  return out;
}

StyleEmbedding encode_reference(const Matrix& mel_segment, const ReferenceEncoder& encoder,
                                StyleLevel level) {
  Graph g;
  return {encoder(g, mel_segment).value().row(0), level, StyleKind::kReference};
}

Residuals compute_residuals(const StyleEmbedding& global, const StyleEmbedding& sentence,
                            std::span<const StyleEmbedding> subword) {
  MSSTYLE_REQUIRE(global.width() == sentence.width(), "residuals: width mismatch");
  MSSTYLE_REQUIRE(!subword.empty(), "residuals: need at least one subword embedding");
  Residuals r;
  r.global = {global.vector, StyleLevel::kGlobal, StyleKind::kResidual};
  r.sentence = {sentence.vector - global.vector, StyleLevel::kSentence, StyleKind::kResidual};
  for (const StyleEmbedding& e : subword) {
    MSSTYLE_REQUIRE(e.width() == sentence.width(), "residuals: width mismatch");
    r.subword.push_back({e.vector - sentence.vector, StyleLevel::kSubword, StyleKind::kResidual});
  }
  return r;
}

StyleEmbedding style_token_attention(const StyleEmbedding& residual, const StyleTokenLayer& layer,
                                     std::vector<Matrix>* weights) {
  Graph g;
  Var out = layer(g, g.constant(residual.vector), weights);
  return {out.value().row(0), residual.level, StyleKind::kStyle};
}

MultiScaleStyle extract_multiscale(const ContextWindow& window,
                                   std::span<const FrameRange> boundaries,
                                   const StyleExtractor& extractor) {
  Graph g;
  const ExtractedVars vars = extractor.forward(g, window, boundaries);
  MultiScaleStyle out;
  out.global = {vars.style_global.value().row(0), StyleLevel::kGlobal, StyleKind::kStyle};
  out.sentence = {vars.style_sentence.value().row(0), StyleLevel::kSentence, StyleKind::kStyle};
  for (Eigen::Index i = 0; i < vars.style_subword.rows(); ++i) {
    out.subword.push_back({vars.style_subword.value().row(i), StyleLevel::kSubword,
                           StyleKind::kStyle});
  }
  out.combined = vars.combined.value();
  return out;
}

}  // namespace msstyle
