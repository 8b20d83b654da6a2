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

// Multi-scale style predictor: a semantic embedder over the context window,
// a hierarchical context encoder (HCE) and three chained linear+tanh
// predictors, highest level first.

#include <memory>
#include <string>
#include <vector>

#include "msstyle/config.hpp"
#include "msstyle/corpus.hpp"
#include "msstyle/extractor.hpp"
#include "msstyle/nn.hpp"

namespace msstyle {

using WindowTokens = std::vector<std::vector<std::string>>;

// Per-sentence, per-subword semantic vectors for the 2L+1 window sentences.
struct SemanticEmbeddingSeq {
  std::vector<Matrix> sentences;  // each n_i x D_sem, n_i >= 1
  int current = 0;

  const Matrix& current_sentence() const { return sentences[static_cast<std::size_t>(current)]; }
  Eigen::Index width() const { return sentences.front().cols(); }
  void validate() const;
};

// Maps the whole window (concatenated by the implementation) to one vector
// per subword, re-split per sentence. Empty sentences map to one pad vector.
class SemanticEmbedder {
 public:
  virtual ~SemanticEmbedder() = default;
  virtual int width() const = 0;
  virtual std::vector<Matrix> embed(const WindowTokens& window) const = 0;
};

// Deterministic fallback. Each subword vector is
//   token(hash(word)) + position(index in the concatenation) + context,
// where context is a fixed projection of the mean token vector over the
// whole concatenation. The context term is the only way a sentence's
// vectors see the other sentences.
class HashEmbedder final : public SemanticEmbedder {
 public:
  explicit HashEmbedder(int width = 32, std::uint64_t seed = 0x5eed);
  int width() const override { return width_; }
  std::vector<Matrix> embed(const WindowTokens& window) const override;

  RowVector token_vector(const std::string& token) const;
  const RowVector& pad_vector() const { return pad_; }

  static constexpr double kPositionScale = 0.5;
  static constexpr double kContextScale = 0.25;

 private:
  int width_;
  std::uint64_t seed_;
  Matrix context_projection_;
  RowVector pad_;
};

// Adapter for an out-of-process model. The command is run through the
// shell with a JSON request on stdin and must print a JSON response:
//   request  {"schema":"msstyle.semantic-embedding.request","version":1,
//             "sentences":[["tok",...],...]}
//   response {"schema":"msstyle.semantic-embedding.response","version":1,
//             "width":D,"embeddings":[[[...D floats per token]...],...]}
// Empty sentences receive the zero pad vector locally.
class ExternalEmbedder final : public SemanticEmbedder {
 public:
  ExternalEmbedder(std::string command, int width);
  int width() const override { return width_; }
  std::vector<Matrix> embed(const WindowTokens& window) const override;

  static std::string request_json(const WindowTokens& window);
  // Throws ExternalDependencyError on any schema or arity violation.
  static std::vector<Matrix> parse_response(const std::string& text, const WindowTokens& window,
                                            int width);

 private:
  std::string command_;
  int width_;
};

// Subword tokens of every window sentence; padding sentences are empty.
WindowTokens window_tokens(const ContextWindow& window);

SemanticEmbeddingSeq embed_subwords(const WindowTokens& window, int current,
                                    const SemanticEmbedder& embedder);

struct HceAttention {
  std::vector<Matrix> subword;  // one 1 x n_i row per sentence
  Matrix sentence;              // 1 x (2L+1)
};

struct ContextEmbeddings {
  Matrix subword;   // C_w: n_current x 2*H_w
  Matrix sentence;  // C_s: (2L+1) x 2*H_s
  RowVector global;  // C_g: 1 x 2*H_s
  int current = 0;   // row of C_s belonging to the current sentence
  HceAttention attention;
};

struct ContextVars {
  ad::Var subword, sentence, global;
  int current = 0;
};

struct PredictedStyles {
  StyleEmbedding global;
  StyleEmbedding sentence;
  std::vector<StyleEmbedding> subword;

  Matrix subword_matrix() const;
};

struct PredictedVars {
  ad::Var global, sentence, subword, combined;
};

struct HierarchicalContextEncoder {
  nn::Linear projection;
  nn::BiGru subword_gru;
  nn::AttentionPool subword_attention;
  nn::BiGru sentence_gru;
  nn::AttentionPool sentence_attention;

  static HierarchicalContextEncoder create(ParamStore& store, const std::string& prefix,
                                           const PredictorConfig& config, Rng& rng);
  ContextVars operator()(ad::Graph& g, const SemanticEmbeddingSeq& sem,
                         HceAttention* attention = nullptr) const;
};

class StylePredictor {
 public:
  StylePredictor() = default;
  StylePredictor(ParamStore& store, const ModelConfig& config, Rng& rng);

  static constexpr const char* kPrefix = "predictor";
  const HierarchicalContextEncoder& hce() const { return hce_; }
  const nn::Linear& head(StyleLevel level) const { return heads_[static_cast<int>(level)]; }
  int semantic_width() const { return semantic_width_; }

  ContextVars context(ad::Graph& g, const SemanticEmbeddingSeq& sem,
                      HceAttention* attention = nullptr) const;
  PredictedVars predict(ad::Graph& g, const ContextVars& ctx) const;
  PredictedVars forward(ad::Graph& g, const SemanticEmbeddingSeq& sem) const;

 private:
  HierarchicalContextEncoder hce_;
  std::array<nn::Linear, 3> heads_;
  int semantic_width_ = 0;
};

// Public value-level operations.
ContextEmbeddings hce_forward(const SemanticEmbeddingSeq& sem, const StylePredictor& predictor);
PredictedStyles predict_styles(const ContextEmbeddings& ctx, const StylePredictor& predictor);
// output[i] = Ŝ_g + Ŝ_s + Ŝ_w[i], the extractor's summation.
Matrix combine_predicted(const PredictedStyles& pred);

}  // namespace msstyle
