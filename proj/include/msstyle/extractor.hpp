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

// Multi-scale style extractor: one reference encoder and one style-token
// layer per level, residual reference embeddings between adjacent levels,
// and per-subword summation of the three style embeddings.

#include <array>
#include <span>
#include <vector>

#include "msstyle/config.hpp"
#include "msstyle/corpus.hpp"
#include "msstyle/nn.hpp"

namespace msstyle {

enum class StyleLevel { kGlobal = 0, kSentence = 1, kSubword = 2 };
enum class StyleKind { kReference, kResidual, kStyle, kPredicted };

const char* to_string(StyleLevel level);

struct StyleEmbedding {
  RowVector vector;
  StyleLevel level = StyleLevel::kGlobal;
  StyleKind kind = StyleKind::kReference;

  Eigen::Index width() const { return vector.size(); }
};

// Which levels contribute to the summed embedding. Inactive levels add zero.
struct LevelMask {
  bool global = true;
  bool sentence = true;
  bool subword = true;

  static LevelMask up_to(StyleLevel level);
};

// Sum of the three levels per subword: out[i] = (global + sentence) + subword[i].
// The predictor uses the same function so both paths agree bit for bit.
ad::Var combine_levels(const ad::Var& global, const ad::Var& sentence, const ad::Var& subword);
Matrix combine_levels(const RowVector& global, const RowVector& sentence, const Matrix& subword);

// Conv stack over the (time x mel) plane followed by a GRU whose final state
// is the reference embedding.
struct ReferenceEncoder {
  std::vector<nn::Conv2d> convs;
  nn::Gru gru;
  int n_mels = 0;

  static ReferenceEncoder create(ParamStore& store, const std::string& prefix,
                                 const ExtractorConfig& config, int n_mels, Rng& rng);
  // mel: T x n_mels with T >= 1. Returns 1 x D_style.
  ad::Var operator()(ad::Graph& g, const Matrix& mel) const;
};

// Multi-head attention of the residual (query) over K learned tokens.
struct StyleTokenLayer {
  Parameter* tokens = nullptr;  // K x D_style
  nn::Linear query;             // D_style x D_style, no bias
  nn::Linear key;               // D_style x D_style, no bias
  nn::Linear value;             // D_style x D_style, no bias
  int heads = 1;

  static StyleTokenLayer create(ParamStore& store, const std::string& prefix,
                                const ExtractorConfig& config, Rng& rng);
  // residual: 1 x D_style. `weights`, when given, receives one 1 x K row per head.
  ad::Var operator()(ad::Graph& g, const ad::Var& residual,
                     std::vector<Matrix>* weights = nullptr) const;
  // tanh(tokens) * W_value: K x D_style.
  Matrix value_projections() const;
};

struct ExtractorLevel {
  ReferenceEncoder encoder;
  StyleTokenLayer tokens;
};

struct Residuals {
  StyleEmbedding global;
  StyleEmbedding sentence;
  std::vector<StyleEmbedding> subword;
};

struct MultiScaleStyle {
  StyleEmbedding global;
  StyleEmbedding sentence;
  std::vector<StyleEmbedding> subword;
  Matrix combined;  // n_subwords x D_style

  // Stacks subword style vectors into n x D_style.
  Matrix subword_matrix() const;
};

// Differentiable outputs of one extraction. Subword quantities are
// n_subwords x D_style.
struct ExtractedVars {
  ad::Var ref_global, ref_sentence, ref_subword;
  ad::Var style_global, style_sentence, style_subword;
  ad::Var combined;
};

class StyleExtractor {
 public:
  StyleExtractor() = default;
  StyleExtractor(ParamStore& store, const ModelConfig& config, Rng& rng);

  const ExtractorLevel& level(StyleLevel l) const { return levels_[static_cast<int>(l)]; }
  static std::string prefix(StyleLevel l);
  int style_width() const { return style_width_; }
  int max_global_frames() const { return max_global_frames_; }

  ExtractedVars forward(ad::Graph& g, const ContextWindow& window,
                        std::span<const FrameRange> boundaries, LevelMask mask = {}) const;

 private:
  std::array<ExtractorLevel, 3> levels_;
  int style_width_ = 0;
  int max_global_frames_ = 0;
};

// Public value-level operations.
StyleEmbedding encode_reference(const Matrix& mel_segment, const ReferenceEncoder& encoder,
                                StyleLevel level = StyleLevel::kGlobal);

// R_g = E_g, R_s = E_s - E_g, R_w[i] = E_w[i] - E_s.
Residuals compute_residuals(const StyleEmbedding& global, const StyleEmbedding& sentence,
                            std::span<const StyleEmbedding> subword);

StyleEmbedding style_token_attention(const StyleEmbedding& residual, const StyleTokenLayer& layer,
                                     std::vector<Matrix>* weights = nullptr);

MultiScaleStyle extract_multiscale(const ContextWindow& window,
                                   std::span<const FrameRange> boundaries,
                                   const StyleExtractor& extractor);

}  // namespace msstyle
