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

#include "msstyle/predictor.hpp"

#include <unistd.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "msstyle/errors.hpp"

namespace msstyle {

using ad::Graph;
using ad::Var;
using nlohmann::json;

void SemanticEmbeddingSeq::validate() const {
  MSSTYLE_REQUIRE(!sentences.empty(), "semantic embeddings: empty window");
  MSSTYLE_REQUIRE(current >= 0 && current < static_cast<int>(sentences.size()),
                  "semantic embeddings: current index out of range");
  for (const Matrix& s : sentences) {
    MSSTYLE_REQUIRE(s.rows() >= 1, "semantic embeddings: sentence without vectors");
    MSSTYLE_REQUIRE(s.cols() == width(), "semantic embeddings: width mismatch");
    MSSTYLE_REQUIRE(s.allFinite(), "semantic embeddings: non-finite entry");
  }
}

HashEmbedder::HashEmbedder(int width, std::uint64_t seed) : width_(width), seed_(seed) {
  MSSTYLE_REQUIRE(width > 0, "hash embedder: width must be positive");
  Rng root(seed);
  Rng proj = root.fork("context");
  context_projection_ = proj.normal_matrix(width, width, 1.0 / std::sqrt(width));
  Rng pad = root.fork("pad");
  pad_ = pad.normal_matrix(1, width, 1.0).row(0);
}

RowVector HashEmbedder::token_vector(const std::string& token) const {
  Rng rng(mix64(fnv1a(token, seed_)));
  return rng.normal_matrix(1, width_, 1.0).row(0);
}

std::vector<Matrix> HashEmbedder::embed(const WindowTokens& window) const {
  std::size_t total = 0;
  for (const auto& s : window) total += s.size();
  const Matrix positions = nn::sinusoid_positions(static_cast<Eigen::Index>(total), width_);

  std::vector<Matrix> tokens;
  RowVector mean = RowVector::Zero(width_);
  for (const auto& s : window) {
    Matrix m(static_cast<Eigen::Index>(s.size()), width_);
    for (std::size_t i = 0; i < s.size(); ++i) {
      m.row(static_cast<Eigen::Index>(i)) = token_vector(s[i]);
      mean += m.row(static_cast<Eigen::Index>(i));
    }
    tokens.push_back(std::move(m));
  }
  if (total > 0) mean /= static_cast<double>(total);
  const RowVector context = kContextScale * (mean * context_projection_);

  std::vector<Matrix> out;
  Eigen::Index offset = 0;
  for (Matrix& m : tokens) {
    if (m.rows() == 0) {
      out.push_back(pad_);
      continue;
    }
    m += kPositionScale * positions.middleRows(offset, m.rows());
    m.rowwise() += context;
    offset += m.rows();
    out.push_back(std::move(m));
  }
  return out;
}

ExternalEmbedder::ExternalEmbedder(std::string command, int width)
    : command_(std::move(command)), width_(width) {
  MSSTYLE_REQUIRE(!command_.empty(), "external embedder: empty command");
  MSSTYLE_REQUIRE(width > 0, "external embedder: width must be positive");
}

std::string ExternalEmbedder::request_json(const WindowTokens& window) {
  json j;
  j["schema"] = "msstyle.semantic-embedding.request";
  j["version"] = 1;
  j["sentences"] = window;
  return j.dump();
}

std::vector<Matrix> ExternalEmbedder::parse_response(const std::string& text,
                                                     const WindowTokens& window, int width) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ExternalDependencyError(std::string("semantic embedder: malformed response: ") + e.what());
  }
  auto fail = [](const std::string& why) {
    throw ExternalDependencyError("semantic embedder: " + why);
  };
  if (j.value("schema", "") != "msstyle.semantic-embedding.response") fail("wrong schema tag");
  if (j.value("version", 0) != 1) fail("unsupported response version");
  if (j.value("width", 0) != width) fail("width differs from the configured semantic width");
  if (!j.contains("embeddings") || !j["embeddings"].is_array() ||
      j["embeddings"].size() != window.size()) {
    fail("sentence count differs from the request");
  }
  std::vector<Matrix> out;
  for (std::size_t s = 0; s < window.size(); ++s) {
    const json& rows = j["embeddings"][s];
    if (!rows.is_array() || rows.size() != window[s].size()) fail("token count differs in sentence " + std::to_string(s));
    if (rows.empty()) {
      out.push_back(Matrix::Zero(1, width));
      continue;
    }
    Matrix m(static_cast<Eigen::Index>(rows.size()), width);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (!rows[r].is_array() || static_cast<int>(rows[r].size()) != width) fail("vector width mismatch");
      for (int c = 0; c < width; ++c) {
        if (!rows[r][static_cast<std::size_t>(c)].is_number()) fail("non-numeric entry");
        m(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(c)].get<double>();
      }
    }
    if (!m.allFinite()) fail("non-finite entry");
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<Matrix> ExternalEmbedder::embed(const WindowTokens& window) const {
  namespace fs = std::filesystem;
  static std::atomic<unsigned> counter{0};
  const std::string stem = "msstyle-embed-" + std::to_string(::getpid()) + "-" +
                           std::to_string(counter++);
  const fs::path request = fs::temp_directory_path() / (stem + ".req.json");
  const fs::path response = fs::temp_directory_path() / (stem + ".resp.json");
  {
    std::ofstream out(request);
    out << request_json(window);
    if (!out) throw ExternalDependencyError("semantic embedder: cannot write request file");
  }
  const std::string cmd = command_ + " < '" + request.string() + "' > '" + response.string() + "'";
  const int status = std::system(cmd.c_str());
  std::stringstream text;
  {
    std::ifstream in(response);
    text << in.rdbuf();
  }
  std::error_code ec;
  fs::remove(request, ec);
  fs::remove(response, ec);
  if (status != 0) {
    throw ExternalDependencyError("semantic embedder: command exited with status " +
                                  std::to_string(status));
  }
  return parse_response(text.str(), window, width_);
}

WindowTokens window_tokens(const ContextWindow& window) {
  WindowTokens out;
  for (std::size_t i = 0; i < window.size(); ++i) {
    out.push_back(window.is_padding(i) ? std::vector<std::string>{} : window.at(i).subwords);
  }
  return out;
}

SemanticEmbeddingSeq embed_subwords(const WindowTokens& window, int current,
                                    const SemanticEmbedder& embedder) {
  MSSTYLE_REQUIRE(current >= 0 && current < static_cast<int>(window.size()),
                  "embed_subwords: current index out of range");
  MSSTYLE_REQUIRE(!window[static_cast<std::size_t>(current)].empty(),
                  "embed_subwords: current sentence has no subwords");
  SemanticEmbeddingSeq seq;
  seq.sentences = embedder.embed(window);
  seq.current = current;
  if (seq.sentences.size() != window.size())
    throw ExternalDependencyError("semantic embedder returned the wrong sentence count");
  for (std::size_t i = 0; i < window.size(); ++i) {
    const auto expected = static_cast<Eigen::Index>(std::max<std::size_t>(window[i].size(), 1));
    if (seq.sentences[i].rows() != expected || seq.sentences[i].cols() != embedder.width())
      throw ExternalDependencyError("semantic embedder returned a misshapen sentence");
  }
  return seq;
}

HierarchicalContextEncoder HierarchicalContextEncoder::create(ParamStore& store,
                                                              const std::string& prefix,
                                                              const PredictorConfig& c, Rng& rng) {
  HierarchicalContextEncoder h;
  h.projection = nn::Linear::create(store, prefix + ".projection", c.semantic_width, c.projection, rng);
  h.subword_gru = nn::BiGru::create(store, prefix + ".subword_gru", c.projection, c.subword_hidden, rng);
  h.subword_attention = nn::AttentionPool::create(store, prefix + ".subword_attention",
                                                  2 * c.subword_hidden, c.attention,
                                                  2 * c.subword_hidden, rng);
  h.sentence_gru = nn::BiGru::create(store, prefix + ".sentence_gru", 2 * c.subword_hidden,
                                     c.sentence_hidden, rng);
  h.sentence_attention = nn::AttentionPool::create(store, prefix + ".sentence_attention",
                                                   2 * c.sentence_hidden, c.attention,
                                                   2 * c.sentence_hidden, rng);
  return h;
}

ContextVars HierarchicalContextEncoder::operator()(Graph& g, const SemanticEmbeddingSeq& sem,
                                                   HceAttention* attention) const {
  sem.validate();
  MSSTYLE_REQUIRE(sem.width() == projection.in(), "hce: semantic width mismatch");
  ContextVars out;
  out.current = sem.current;
  std::vector<Var> sentence_vectors;
  if (attention) attention->subword.clear();
  for (std::size_t i = 0; i < sem.sentences.size(); ++i) {
    Var states = subword_gru(g, projection(g, g.constant(sem.sentences[i])));
    if (static_cast<int>(i) == sem.current) out.subword = states;
    Matrix w;
    sentence_vectors.push_back(subword_attention(g, states, &w));
    if (attention) attention->subword.push_back(std::move(w));
  }
  out.sentence = sentence_gru(g, ad::concat_rows(sentence_vectors));
  Matrix w;
  out.global = sentence_attention(g, out.sentence, &w);
  if (attention) attention->sentence = std::move(w);
  return out;
}

StylePredictor::StylePredictor(ParamStore& store, const ModelConfig& config, Rng& rng)
    : semantic_width_(config.predictor.semantic_width) {
  const PredictorConfig& c = config.predictor;
  const int d = config.extractor.style_width;
  Rng r = rng.fork(kPrefix);
  hce_ = HierarchicalContextEncoder::create(store, std::string(kPrefix) + ".hce", c, r);
  heads_[0] = nn::Linear::create(store, std::string(kPrefix) + ".global", 2 * c.sentence_hidden, d, r);
  heads_[1] = nn::Linear::create(store, std::string(kPrefix) + ".sentence",
                                 2 * c.sentence_hidden + d, d, r);
  heads_[2] = nn::Linear::create(store, std::string(kPrefix) + ".subword",
                                 2 * c.subword_hidden + d, d, r);
}

ContextVars StylePredictor::context(Graph& g, const SemanticEmbeddingSeq& sem,
                                    HceAttention* attention) const {
  return hce_(g, sem, attention);
}

PredictedVars StylePredictor::predict(Graph& g, const ContextVars& ctx) const {
  PredictedVars out;
  const Var current = ad::slice_rows(ctx.sentence, ctx.current, 1);
  out.global = ad::tanh(heads_[0](g, ctx.global));
  out.sentence = ad::tanh(heads_[1](g, ad::concat_cols({current, out.global})));
  // Every subword row is conditioned on the same sentence style.
  std::vector<int> repeat(static_cast<std::size_t>(ctx.subword.rows()), 0);
  out.subword = ad::tanh(heads_[2](g, ad::concat_cols({ctx.subword, ad::gather_rows(out.sentence, repeat)})));
  out.combined = combine_levels(out.global, out.sentence, out.subword);
  return out;
}

PredictedVars StylePredictor::forward(Graph& g, const SemanticEmbeddingSeq& sem) const {
  return predict(g, context(g, sem));
}

Matrix PredictedStyles::subword_matrix() const {
  Matrix m(static_cast<Eigen::Index>(subword.size()), global.width());
  for (std::size_t i = 0; i < subword.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = subword[i].vector;
  return m;
}

ContextEmbeddings hce_forward(const SemanticEmbeddingSeq& sem, const StylePredictor& predictor) {
  Graph g;
  ContextEmbeddings out;
  const ContextVars vars = predictor.context(g, sem, &out.attention);
  out.subword = vars.subword.value();
  out.sentence = vars.sentence.value();
  out.global = vars.global.value().row(0);
  out.current = vars.current;
  return out;
}

PredictedStyles predict_styles(const ContextEmbeddings& ctx, const StylePredictor& predictor) {
  MSSTYLE_REQUIRE(ctx.current >= 0 && ctx.current < ctx.sentence.rows(),
                  "predict_styles: current sentence out of range");
  Graph g;
  ContextVars vars;
  vars.subword = g.constant(ctx.subword);
  vars.sentence = g.constant(ctx.sentence);
  vars.global = g.constant(Matrix(ctx.global));
  vars.current = ctx.current;
  const PredictedVars p = predictor.predict(g, vars);
  PredictedStyles out;
  out.global = {p.global.value().row(0), StyleLevel::kGlobal, StyleKind::kPredicted};
  out.sentence = {p.sentence.value().row(0), StyleLevel::kSentence, StyleKind::kPredicted};
  for (Eigen::Index i = 0; i < p.subword.rows(); ++i)
    out.subword.push_back({p.subword.value().row(i), StyleLevel::kSubword, StyleKind::kPredicted});
  return out;
}

Matrix combine_predicted(const PredictedStyles& pred) {
  MSSTYLE_REQUIRE(!pred.subword.empty(), "combine_predicted: no subword styles");
  return combine_levels(pred.global.vector, pred.sentence.vector, pred.subword_matrix());
}

}  // namespace msstyle
