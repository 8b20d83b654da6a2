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

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "gradcheck.hpp"
#include "msstyle/errors.hpp"
#include "msstyle/predictor.hpp"

using namespace msstyle;
using ad::Graph;
using ad::Var;

namespace {

struct Fixture {
  ModelConfig config = ModelConfig::for_preset(Preset::kTiny);
  ParamStore store;
  Rng rng{17};
  StylePredictor predictor{store, config, rng};
  HashEmbedder embedder{config.predictor.semantic_width};
};

WindowTokens sample_window() {
  return {{"kali", "mosa", "ne"}, {"dube"}, {"kali", "lo", "sen", "ima"}, {"ba"}, {"nu", "ke"}};
}

Matrix repeat_row(const RowVector& row, Eigen::Index n) { return row.replicate(n, 1); }

}  // namespace

TEST_CASE("hash embedder is deterministic and preserves arity") {
  const HashEmbedder e(32);
  WindowTokens w = {{"a", "b", "c"}, {"d", "e"}, {"f", "g", "h", "i"}, {"j"}, {"k", "l"}};
  const auto first = e.embed(w);
  const auto second = e.embed(w);
  REQUIRE(first.size() == 5);
  const std::vector<Eigen::Index> lengths = {3, 2, 4, 1, 2};
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(first[i].rows() == lengths[i]);
    CHECK(first[i].cols() == 32);
    CHECK(first[i] == second[i]);
  }
  const SemanticEmbeddingSeq seq = embed_subwords(w, 2, e);
  CHECK(seq.current_sentence() == first[2]);
  CHECK_THROWS_AS(embed_subwords({{"a"}, {}, {"b"}}, 1, e), ContractError);
}

TEST_CASE("a different future sentence changes only the context channel") {
  const HashEmbedder e(32);
  WindowTokens a = sample_window();
  WindowTokens b = a;
  b[4] = {"mi", "sa"};
  const Matrix ca = e.embed(a)[2];
  const Matrix cb = e.embed(b)[2];
  const Matrix diff = ca - cb;
  CHECK(diff.cwiseAbs().maxCoeff() > 1e-6);
  // The difference is one shared row: positions and token identities agree.
  for (Eigen::Index i = 1; i < diff.rows(); ++i)
    CHECK((diff.row(i) - diff.row(0)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(e.embed(a)[0] != e.embed(b)[0]);
}

TEST_CASE("padding sentences get the pad vector") {
  const HashEmbedder e(32);
  const auto out = e.embed({{}, {}, {"ka", "lo"}, {"mi"}, {}});
  CHECK(out[0].rows() == 1);
  CHECK(out[0].row(0) == e.pad_vector());
  CHECK(out[4].row(0) == e.pad_vector());
}

TEST_CASE("external embedder response schema") {
  const WindowTokens w = {{"ka"}, {}, {"lo", "mi"}};
  nlohmann::json good = {{"schema", "msstyle.semantic-embedding.response"},
                         {"version", 1},
                         {"width", 2},
                         {"embeddings", {{{1.0, 2.0}}, nlohmann::json::array(), {{3.0, 4.0}, {5.0, 6.0}}}}};
  const auto out = ExternalEmbedder::parse_response(good.dump(), w, 2);
  REQUIRE(out.size() == 3);
  CHECK(out[1] == Matrix::Zero(1, 2));
  CHECK(out[2](1, 0) == 5.0);

  auto broken = [&](auto mutate) {
    nlohmann::json j = good;
    mutate(j);
    return j.dump();
  };
  CHECK_THROWS_AS(ExternalEmbedder::parse_response("{", w, 2), ExternalDependencyError);
  CHECK_THROWS_AS(ExternalEmbedder::parse_response(broken([](auto& j) { j["schema"] = "x"; }), w, 2),
                  ExternalDependencyError);
  CHECK_THROWS_AS(ExternalEmbedder::parse_response(broken([](auto& j) { j["version"] = 2; }), w, 2),
                  ExternalDependencyError);
  CHECK_THROWS_AS(ExternalEmbedder::parse_response(good.dump(), w, 3), ExternalDependencyError);
  CHECK_THROWS_AS(
      ExternalEmbedder::parse_response(broken([](auto& j) { j["embeddings"][2].erase(1); }), w, 2),
      ExternalDependencyError);

  const nlohmann::json req = nlohmann::json::parse(ExternalEmbedder::request_json(w));
  CHECK(req["schema"] == "msstyle.semantic-embedding.request");
  CHECK(req["sentences"][2][1] == "mi");
}

TEST_CASE("external embedder runs a subprocess") {
  namespace fs = std::filesystem;
  const fs::path file = fs::temp_directory_path() / "msstyle-test-embed-response.json";
  const WindowTokens w = {{"ka"}, {"lo"}, {"mi"}};
  {
    std::ofstream out(file);
    out << R"({"schema":"msstyle.semantic-embedding.response","version":1,"width":1,)"
        << R"("embeddings":[[[0.5]],[[1.5]],[[2.5]]]})";
  }
  const ExternalEmbedder ok("cat '" + file.string() + "'", 1);
  const auto out = ok.embed(w);
  CHECK(out[2](0, 0) == 2.5);
  const ExternalEmbedder failing("false", 1);
  CHECK_THROWS_AS(failing.embed(w), ExternalDependencyError);
  const ExternalEmbedder wrong_width("cat '" + file.string() + "'", 4);
  CHECK_THROWS_AS(embed_subwords(w, 1, wrong_width), ExternalDependencyError);
  fs::remove(file);
}

TEST_CASE("hce attention weights are probability vectors") {
  Fixture f;
  const SemanticEmbeddingSeq sem = embed_subwords(sample_window(), 2, f.embedder);
  const ContextEmbeddings ctx = hce_forward(sem, f.predictor);
  REQUIRE(ctx.attention.subword.size() == 5);
  for (const Matrix& w : ctx.attention.subword) {
    CHECK(w.minCoeff() >= 0.0);
    CHECK(std::abs(w.sum() - 1.0) < 1e-6);
  }
  CHECK(ctx.attention.sentence.cols() == 5);
  CHECK(std::abs(ctx.attention.sentence.sum() - 1.0) < 1e-6);
  CHECK(ctx.subword.rows() == 4);
  CHECK(ctx.sentence.rows() == 5);
  CHECK(ctx.global.size() == 2 * f.config.predictor.sentence_hidden);
}

TEST_CASE("identical sentence vectors pool to their value projection") {
  Fixture f;
  const nn::AttentionPool& pool = f.predictor.hce().sentence_attention;
  Rng rng(3);
  const RowVector v = rng.normal_matrix(1, 2 * f.config.predictor.sentence_hidden, 1.0).row(0);
  Graph g;
  Matrix w;
  const Var out = pool(g, g.constant(repeat_row(v, 5)), &w);
  const RowVector expected = v * pool.value.weight->value;
  CHECK((out.value().row(0) - expected).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((w.array() - 0.2).abs().maxCoeff() < 1e-15);
}

TEST_CASE("single sentence single subword window") {
  Fixture f;
  const SemanticEmbeddingSeq sem = embed_subwords({{"ka"}}, 0, f.embedder);
  const ContextEmbeddings ctx = hce_forward(sem, f.predictor);
  CHECK(ctx.subword.rows() == 1);
  CHECK(ctx.sentence.rows() == 1);
  CHECK(ctx.attention.sentence(0, 0) == 1.0);
  const RowVector expected = ctx.sentence.row(0) * f.predictor.hce().sentence_attention.value.weight->value;
  CHECK((ctx.global - expected).cwiseAbs().maxCoeff() < 1e-12);
  const PredictedStyles pred = predict_styles(ctx, f.predictor);
  CHECK(pred.subword.size() == 1);
}

TEST_CASE("predicted styles are bounded and chained") {
  Fixture f;
  const SemanticEmbeddingSeq sem = embed_subwords(sample_window(), 2, f.embedder);
  const PredictedStyles pred = predict_styles(hce_forward(sem, f.predictor), f.predictor);
  REQUIRE(pred.subword.size() == 4);
  CHECK(pred.global.vector.cwiseAbs().maxCoeff() < 1.0);
  CHECK(pred.sentence.vector.cwiseAbs().maxCoeff() < 1.0);
  CHECK(pred.subword_matrix().cwiseAbs().maxCoeff() < 1.0);
  CHECK(pred.global.kind == StyleKind::kPredicted);

  // Lower-level heads never influence the global prediction.
  for (const auto& name : f.store.names_with_prefix("predictor.sentence"))
    f.store.at(name).value.array() += 0.3;
  for (const auto& name : f.store.names_with_prefix("predictor.subword"))
    f.store.at(name).value.array() -= 0.3;
  const PredictedStyles lower = predict_styles(hce_forward(sem, f.predictor), f.predictor);
  CHECK(lower.global.vector == pred.global.vector);
  CHECK(lower.sentence.vector != pred.sentence.vector);

  // A perturbed global style propagates down the chain.
  f.store.at("predictor.global.bias").value.array() += 0.2;
  const PredictedStyles moved = predict_styles(hce_forward(sem, f.predictor), f.predictor);
  CHECK(moved.global.vector != lower.global.vector);
  CHECK((moved.sentence.vector - lower.sentence.vector).cwiseAbs().maxCoeff() > 1e-9);
  CHECK((moved.subword_matrix() - lower.subword_matrix()).cwiseAbs().maxCoeff() > 1e-9);
}

TEST_CASE("zero heads predict zero styles") {
  Fixture f;
  for (const char* level : {"predictor.global", "predictor.sentence", "predictor.subword"})
    for (const auto& name : f.store.names_with_prefix(std::string(level) + "."))
      f.store.at(name).value.setZero();
  const SemanticEmbeddingSeq sem = embed_subwords(sample_window(), 2, f.embedder);
  const PredictedStyles pred = predict_styles(hce_forward(sem, f.predictor), f.predictor);
  CHECK(pred.global.vector.isZero(0.0));
  CHECK(pred.sentence.vector.isZero(0.0));
  CHECK(pred.subword_matrix().isZero(0.0));
}

TEST_CASE("global head receives gradient through every output") {
  Fixture f;
  const SemanticEmbeddingSeq sem = embed_subwords(sample_window(), 2, f.embedder);
  Rng rng(40);
  const int d = f.config.extractor.style_width;
  const Matrix tg = rng.normal_matrix(1, d, 0.5);
  const Matrix ts = rng.normal_matrix(1, d, 0.5);
  const Matrix tw = rng.normal_matrix(4, d, 0.5);
  Parameter& weight = f.store.at("predictor.global.weight");
  for (int which = 0; which < 3; ++which) {
    CAPTURE(which);
    auto run = [&](Graph& g) {
      const PredictedVars p = f.predictor.forward(g, sem);
      if (which == 0) return nn::l1_loss(p.global, g.constant(tg));
      if (which == 1) return nn::l1_loss(p.sentence, g.constant(ts));
      return nn::l1_loss(p.subword, g.constant(tw));
    };
    f.store.zero_grad();
    Graph g;
    g.backward(run(g));
    CHECK(weight.grad.cwiseAbs().maxCoeff() > 0.0);
    auto loss = [&]() {
      Graph h;
      return run(h).value()(0, 0);
    };
    CHECK(testing::max_relative_error(weight, weight.grad, loss, 1e-5) < 1e-4);
  }
}

TEST_CASE("combination matches the extractor summation") {
  Fixture f;
  const SemanticEmbeddingSeq sem = embed_subwords(sample_window(), 2, f.embedder);
  const PredictedStyles pred = predict_styles(hce_forward(sem, f.predictor), f.predictor);
  const Matrix combined = combine_predicted(pred);
  CHECK(combined.rows() == 4);
  CHECK(combined == combine_levels(pred.global.vector, pred.sentence.vector, pred.subword_matrix()));

  Graph g;
  const PredictedVars vars = f.predictor.forward(g, sem);
  CHECK(vars.combined.value() == combined);
  CHECK(vars.global.value().row(0) == pred.global.vector);

  PredictedStyles flat = pred;
  flat.sentence.vector.setZero();
  for (auto& s : flat.subword) s.vector.setZero();
  const Matrix only_global = combine_predicted(flat);
  for (Eigen::Index i = 0; i < only_global.rows(); ++i) CHECK(only_global.row(i) == pred.global.vector);
}

TEST_CASE("predictor shapes across window positions") {
  Fixture f;
  const auto corpus = generate_toy_corpus(5, 5);
  for (int radius : {0, 1, 2}) {
    for (int index = 0; index < 5; ++index) {
      const ContextWindow window = build_context_window(corpus, index, radius);
      const SemanticEmbeddingSeq sem = embed_subwords(window_tokens(window), radius, f.embedder);
      const PredictedStyles a = predict_styles(hce_forward(sem, f.predictor), f.predictor);
      const PredictedStyles b = predict_styles(hce_forward(sem, f.predictor), f.predictor);
      CHECK(a.subword.size() == window.current().subwords.size());
      CHECK(a.subword_matrix() == b.subword_matrix());
    }
  }
}
