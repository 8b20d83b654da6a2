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

#include <cmath>

#include "gradcheck.hpp"
#include "msstyle/errors.hpp"
#include "msstyle/extractor.hpp"

using namespace msstyle;
using ad::Graph;
using ad::Var;

namespace {

ModelConfig tiny_config() { return ModelConfig::for_preset(Preset::kTiny); }

struct Fixture {
  ModelConfig config = tiny_config();
  ParamStore store;
  Rng rng{7};
  StyleExtractor extractor{store, config, rng};
  std::vector<Utterance> corpus = generate_toy_corpus(3, 6);
};

StyleEmbedding embedding(std::initializer_list<double> values) {
  StyleEmbedding e;
  e.vector = RowVector(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double v : values) e.vector(i++) = v;
  return e;
}

}  // namespace

TEST_CASE("reference encoder output width is fixed and deterministic") {
  Fixture f;
  const ReferenceEncoder& enc = f.extractor.level(StyleLevel::kGlobal).encoder;
  Rng rng(5);
  const Matrix one = rng.normal_matrix(1, 80, 1.0);
  const Matrix many = rng.normal_matrix(500, 80, 1.0);
  const StyleEmbedding a = encode_reference(one, enc);
  const StyleEmbedding b = encode_reference(many, enc);
  CHECK(a.width() == f.config.extractor.style_width);
  CHECK(b.width() == f.config.extractor.style_width);
  CHECK(a.vector.allFinite());
  CHECK(encode_reference(many, enc).vector == b.vector);
  CHECK_THROWS_AS(encode_reference(Matrix(0, 80), enc), ContractError);
}

TEST_CASE("reference encoder gradients match central differences") {
  Fixture f;
  const ReferenceEncoder& enc = f.extractor.level(StyleLevel::kSubword).encoder;
  Rng rng(8);
  const Matrix mel = rng.normal_matrix(7, 80, 1.0);
  const Matrix w = rng.normal_matrix(1, f.config.extractor.style_width, 1.0);
  auto run = [&](Graph& g) { return ad::sum(ad::cwise_mul(enc(g, mel), g.constant(w))); };
  Graph g;
  g.backward(run(g));
  auto loss = [&]() {
    Graph h;
    return run(h).value()(0, 0);
  };
  for (const auto& name : f.store.names_with_prefix("extractor.subword.")) {
    if (name.find("style_tokens") != std::string::npos) continue;
    CAPTURE(name);
    Parameter& p = f.store.at(name);
    CHECK(testing::max_relative_error(p, p.grad, loss, 1e-5) < 1e-4);
  }
}

TEST_CASE("residuals follow the level differences") {
  const StyleEmbedding v = embedding({0.5, -1.0, 2.0});
  const std::vector<StyleEmbedding> same = {v, v};
  const Residuals zero = compute_residuals(v, v, same);
  CHECK(zero.global.vector == v.vector);
  CHECK(zero.sentence.vector.isZero(0.0));
  CHECK(zero.subword[1].vector.isZero(0.0));

  const std::vector<StyleEmbedding> words = {embedding({4, 2})};
  const Residuals r = compute_residuals(embedding({1, 0}), embedding({3, 2}), words);
  CHECK(r.global.vector == RowVector{{1, 0}});
  CHECK(r.sentence.vector == RowVector{{2, 2}});
  CHECK(r.subword[0].vector == RowVector{{1, 0}});
  CHECK(r.sentence.kind == StyleKind::kResidual);

  CHECK_THROWS_AS(compute_residuals(embedding({1, 0}), embedding({1, 0, 0}), words), ContractError);
  CHECK_THROWS_AS(compute_residuals(embedding({1, 0}), embedding({1, 0}), {}), ContractError);
}

TEST_CASE("residual reconstruction on random inputs") {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    StyleEmbedding g{rng.normal_matrix(1, 16, 3.0).row(0)};
    StyleEmbedding s{rng.normal_matrix(1, 16, 3.0).row(0)};
    std::vector<StyleEmbedding> w = {{rng.normal_matrix(1, 16, 3.0).row(0)}};
    const Residuals r = compute_residuals(g, s, w);
    const RowVector rs = r.global.vector + r.sentence.vector;
    const RowVector rw = rs + r.subword[0].vector;
    CHECK((rs - s.vector).cwiseAbs().maxCoeff() <= 1e-6 * (1.0 + s.vector.cwiseAbs().maxCoeff()));
    CHECK((rw - w[0].vector).cwiseAbs().maxCoeff() <= 1e-6 * (1.0 + w[0].vector.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("single token attention returns its value projection") {
  ParamStore store;
  Rng rng(4);
  ExtractorConfig cfg = tiny_config().extractor;
  cfg.tokens = 1;
  const StyleTokenLayer layer = StyleTokenLayer::create(store, "gst", cfg, rng);
  const Matrix expected = layer.value_projections();
  for (int trial = 0; trial < 3; ++trial) {
    StyleEmbedding q{rng.normal_matrix(1, cfg.style_width, 2.0).row(0), StyleLevel::kGlobal,
                     StyleKind::kResidual};
    const StyleEmbedding out = style_token_attention(q, layer);
    CHECK((out.vector - expected.row(0)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(out.kind == StyleKind::kStyle);
  }
}

TEST_CASE("zero query attends uniformly") {
  ParamStore store;
  Rng rng(4);
  ExtractorConfig cfg = tiny_config().extractor;
  cfg.heads = 2;
  const StyleTokenLayer layer = StyleTokenLayer::create(store, "gst", cfg, rng);
  std::vector<Matrix> weights;
  const StyleEmbedding out = style_token_attention(
      {RowVector::Zero(cfg.style_width), StyleLevel::kSentence, StyleKind::kResidual}, layer,
      &weights);
  const RowVector mean = layer.value_projections().colwise().mean();
  CHECK((out.vector - mean).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE(weights.size() == 2);
  for (const Matrix& w : weights) CHECK((w.array() - 1.0 / cfg.tokens).abs().maxCoeff() < 1e-15);
}

TEST_CASE("token attention matches an explicit softmax oracle") {
  ParamStore store;
  Rng rng(12);
  ExtractorConfig cfg = tiny_config().extractor;
  cfg.tokens = 4;
  cfg.heads = 1;
  const StyleTokenLayer layer = StyleTokenLayer::create(store, "gst", cfg, rng);
  const RowVector r = rng.normal_matrix(1, cfg.style_width, 1.0).row(0);

  const Matrix bank = layer.tokens->value.array().tanh().matrix();
  const Matrix keys = bank * layer.key.weight->value;
  const Matrix values = bank * layer.value.weight->value;
  const RowVector q = r * layer.query.weight->value;
  std::vector<double> logits(4);
  double peak = -1e300;
  for (int k = 0; k < 4; ++k) {
    logits[k] = q.dot(keys.row(k)) / std::sqrt(static_cast<double>(cfg.style_width));
    peak = std::max(peak, logits[k]);
  }
  double z = 0.0;
  for (double& l : logits) z += (l = std::exp(l - peak));
  RowVector expected = RowVector::Zero(cfg.style_width);
  for (int k = 0; k < 4; ++k) expected += (logits[k] / z) * values.row(k);

  std::vector<Matrix> weights;
  const StyleEmbedding out = style_token_attention({r}, layer, &weights);
  CHECK((out.vector - expected).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(weights[0].minCoeff() >= 0.0);
  CHECK(std::abs(weights[0].sum() - 1.0) < 1e-6);
}

TEST_CASE("token attention output lies in the span of the value projections") {
  Fixture f;
  const StyleTokenLayer& layer = f.extractor.level(StyleLevel::kGlobal).tokens;
  const Matrix basis = layer.value_projections().transpose();  // D x K, K < D
  REQUIRE(basis.cols() < basis.rows());
  Rng rng(30);
  for (int trial = 0; trial < 10; ++trial) {
    const StyleEmbedding out =
        style_token_attention({rng.normal_matrix(1, basis.rows(), 1.0).row(0)}, layer);
    const Vector coeff = basis.colPivHouseholderQr().solve(out.vector.transpose());
    const double resid = (basis * coeff - out.vector.transpose()).norm();
    CHECK(resid < 1e-9 * (1.0 + out.vector.norm()));
  }
}

TEST_CASE("levels own disjoint parameters") {
  Fixture f;
  for (StyleLevel a : {StyleLevel::kGlobal, StyleLevel::kSentence, StyleLevel::kSubword}) {
    const auto names = f.store.names_with_prefix(StyleExtractor::prefix(a) + ".");
    CHECK_FALSE(names.empty());
    for (StyleLevel b : {StyleLevel::kGlobal, StyleLevel::kSentence, StyleLevel::kSubword}) {
      if (a == b) continue;
      const auto other = f.store.names_with_prefix(StyleExtractor::prefix(b) + ".");
      for (const auto& n : names)
        for (const auto& m : other) CHECK(&f.store.at(n) != &f.store.at(m));
    }
  }
  CHECK(f.store.contains("extractor.global.conv1.weight"));

  const ContextWindow window = build_context_window(f.corpus, 2, f.config.context_radius);
  const auto bounds = subword_frame_boundaries(window.current().alignment);
  const MultiScaleStyle before = extract_multiscale(window, bounds, f.extractor);
  for (const auto& name : f.store.names_with_prefix("extractor.subword.")) {
    f.store.at(name).value.array() += 0.5;
  }
  const MultiScaleStyle after = extract_multiscale(window, bounds, f.extractor);
  CHECK(after.global.vector == before.global.vector);
  CHECK(after.sentence.vector == before.sentence.vector);
  CHECK_FALSE(after.subword_matrix() == before.subword_matrix());
}

TEST_CASE("multi-scale extraction equals composing the public operations") {
  Fixture f;
  for (int index : {0, 3, 5}) {
    CAPTURE(index);
    const ContextWindow window = build_context_window(f.corpus, index, f.config.context_radius);
    const auto bounds = subword_frame_boundaries(window.current().alignment);
    const MultiScaleStyle ms = extract_multiscale(window, bounds, f.extractor);
    REQUIRE(ms.subword.size() == bounds.size());
    REQUIRE(ms.combined.rows() == static_cast<Eigen::Index>(bounds.size()));

    const auto& lg = f.extractor.level(StyleLevel::kGlobal);
    const auto& ls = f.extractor.level(StyleLevel::kSentence);
    const auto& lw = f.extractor.level(StyleLevel::kSubword);
    const StyleEmbedding eg = encode_reference(
        concatenated_window_mel(window, f.config.max_global_frames), lg.encoder, StyleLevel::kGlobal);
    const StyleEmbedding es = encode_reference(window.current().mel.frames, ls.encoder,
                                               StyleLevel::kSentence);
    std::vector<StyleEmbedding> ew;
    for (const FrameRange& b : bounds) {
      ew.push_back(encode_reference(mel_segment(window.current().mel, b), lw.encoder,
                                    StyleLevel::kSubword));
    }
    const Residuals r = compute_residuals(eg, es, ew);
    const StyleEmbedding sg = style_token_attention(r.global, lg.tokens);
    const StyleEmbedding ss = style_token_attention(r.sentence, ls.tokens);
    Matrix sw(static_cast<Eigen::Index>(bounds.size()), sg.width());
    for (std::size_t i = 0; i < bounds.size(); ++i) {
      sw.row(static_cast<Eigen::Index>(i)) = style_token_attention(r.subword[i], lw.tokens).vector;
    }
    CHECK(ms.global.vector == sg.vector);
    CHECK(ms.sentence.vector == ss.vector);
    CHECK(ms.subword_matrix() == sw);
    CHECK(ms.combined == combine_levels(sg.vector, ss.vector, sw));
  }
}

TEST_CASE("zero lower levels leave the global style on every subword") {
  const RowVector g{{0.25, -1.5, 3.0}};
  const Matrix zeros = Matrix::Zero(4, 3);
  const Matrix out = combine_levels(g, RowVector::Zero(3), zeros);
  CHECK(out.rows() == 4);
  for (Eigen::Index i = 0; i < out.rows(); ++i) CHECK(out.row(i) == g);

  Fixture f;
  const ContextWindow window = build_context_window(f.corpus, 1, f.config.context_radius);
  const auto bounds = subword_frame_boundaries(window.current().alignment);
  Graph graph;
  const ExtractedVars vars =
      f.extractor.forward(graph, window, bounds, LevelMask::up_to(StyleLevel::kGlobal));
  for (Eigen::Index i = 0; i < vars.combined.rows(); ++i)
    CHECK(vars.combined.value().row(i) == vars.style_global.value().row(0));
}
