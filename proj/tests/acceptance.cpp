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

// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "msstyle/errors.hpp"
#include "msstyle/eval.hpp"
#include "msstyle/io.hpp"
#include "msstyle/training.hpp"

using namespace msstyle;
using ad::Graph;
using ad::Var;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (limit_s > 0 && secs >= limit_s) {
    o.pass = false;
    o.detail += "; over the " + std::to_string(limit_s) + " s budget";
  }
  if (!o.pass) ++failures;
  std::printf("%s %2d %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

bool same_bytes(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

std::map<std::string, Matrix> snapshot(const ParamStore& store) {
  std::map<std::string, Matrix> out;
  for (const auto& [name, p] : store.items()) out.emplace(name, p.value);
  return out;
}

bool same_parameters(const ParamStore& a, const ParamStore& b) {
  const auto sa = snapshot(a), sb = snapshot(b);
  if (sa.size() != sb.size()) return false;
  for (const auto& [name, m] : sa) {
    auto it = sb.find(name);
    if (it == sb.end() || !same_bytes(m, it->second)) return false;
  }
  return true;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("msstyle-acceptance-" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) { return fs::exists(p) ? io::read_text(p) : std::string(); }

// Shared fixture: the seed-pinned 32-utterance toy corpus on the tiny preset.
struct Pipeline {
  ModelConfig config = ModelConfig::for_preset(Preset::kTiny);
  TrainingSchedule schedule = TrainingSchedule::for_preset(Preset::kTiny);
  std::vector<Utterance> corpus = generate_toy_corpus(7, 32);
  HashEmbedder embedder{config.predictor.semantic_width};

  std::unique_ptr<MsStyleModel> fresh_model() const {
    auto m = MsStyleModel::create(config, PhonemeInventory::from_corpus(corpus), 2024);
    m->acoustic.set_stats(VarianceStats::from_corpus(corpus));
    return m;
  }
};

// ------------------------------------------------------------------ 1

Outcome residual_algebra() {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_int_distribution<int> count(1, 8);
  std::uniform_real_distribution<double> scale(1e-3, 1e3);
  const auto random_row = [&](int d, double s) {
    RowVector v(d);
    for (int i = 0; i < d; ++i) v(i) = s * n(rng);
    return v;
  };
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int d = 16;
    const double s = scale(rng);
    const StyleEmbedding eg{random_row(d, s)}, es{random_row(d, s)};
    std::vector<StyleEmbedding> ew;
    for (int i = count(rng); i > 0; --i) ew.push_back({random_row(d, s)});
    const Residuals r = compute_residuals(eg, es, ew);
    const auto rel = [](const RowVector& got, const RowVector& want) {
      return (got - want).norm() / std::max(want.norm(), std::numeric_limits<double>::min());
    };
    worst = std::max(worst, rel(r.global.vector + r.sentence.vector, es.vector));
    for (std::size_t i = 0; i < ew.size(); ++i)
      worst = std::max(worst, rel(r.global.vector + r.sentence.vector + r.subword[i].vector, ew[i].vector));
  }
  return {worst <= 1e-6, "worst relative reconstruction error " + fmt(worst) + " over 1000 triples"};
}

// ------------------------------------------------------------------ 2

// softmax(q K^T / sqrt(d)) V, written out with loops.
RowVector softmax_pool(const RowVector& q, const Matrix& keys, const Matrix& values, RowVector* weights) {
  const double inv = 1.0 / std::sqrt(static_cast<double>(q.size()));
  std::vector<double> w(static_cast<std::size_t>(keys.rows()));
  double peak = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < keys.rows(); ++k) {
    double dot = 0.0;
    for (Eigen::Index c = 0; c < q.size(); ++c) dot += q(c) * keys(k, c);
    w[static_cast<std::size_t>(k)] = dot * inv;
    peak = std::max(peak, dot * inv);
  }
  double z = 0.0;
  for (double& x : w) z += (x = std::exp(x - peak));
  RowVector out = RowVector::Zero(values.cols());
  if (weights) weights->resize(keys.rows());
  for (Eigen::Index k = 0; k < keys.rows(); ++k) {
    const double a = w[static_cast<std::size_t>(k)] / z;
    if (weights) (*weights)(k) = a;
    out += a * values.row(k);
  }
  return out;
}

Matrix affine(const Matrix& x, const nn::Linear& l) {
  Matrix y = x * l.weight->value;
  if (l.bias) y.rowwise() += l.bias->value.row(0);
  return y;
}

struct AttentionCheck {
  double oracle_error = 0.0;
  double sum_error = 0.0;
  double min_weight = 1.0;

  void weights(const Matrix& w) {
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      sum_error = std::max(sum_error, std::abs(w.row(r).sum() - 1.0));
      min_weight = std::min(min_weight, w.row(r).minCoeff());
    }
  }
  void compare(const Matrix& got, const Matrix& want) {
    oracle_error = std::max(oracle_error, (got - want).cwiseAbs().maxCoeff());
  }
};

void check_token_layer(const StyleTokenLayer& layer, const RowVector& residual, AttentionCheck& c) {
  std::vector<Matrix> weights;
  const StyleEmbedding got = style_token_attention({residual}, layer, &weights);
  const Matrix bank = layer.tokens->value.array().tanh().matrix();
  const Matrix keys = bank * layer.key.weight->value, values = bank * layer.value.weight->value;
  const RowVector q = residual * layer.query.weight->value;
  const Eigen::Index d = q.size() / layer.heads;
  RowVector want(q.size());
  for (int h = 0; h < layer.heads; ++h) {
    RowVector w;
    want.segment(h * d, d) = softmax_pool(q.segment(h * d, d), keys.middleCols(h * d, d), values.middleCols(h * d, d), &w);
    c.weights(weights[static_cast<std::size_t>(h)]);
    c.compare(weights[static_cast<std::size_t>(h)], w);
  }
  c.compare(got.vector, want);
}

void check_pool(const nn::AttentionPool& pool, const Matrix& x, AttentionCheck& c) {
  Graph g;
  Matrix w;
  const Var out = pool(g, g.constant(x), &w);
  RowVector want_w;
  const RowVector want = softmax_pool(pool.query->value.row(0), affine(x, pool.key), affine(x, pool.value), &want_w);
  c.weights(w);
  c.compare(w, want_w);
  c.compare(out.value(), want);
}

Outcome attention_correctness(const Pipeline& p) {
  AttentionCheck c;
  Rng rng(5);
  // Style-token layers of the tiny model (one head) and a four-head variant.
  const auto model = p.fresh_model();
  for (StyleLevel l : {StyleLevel::kGlobal, StyleLevel::kSentence, StyleLevel::kSubword})
    for (int trial = 0; trial < 20; ++trial)
      check_token_layer(model->extractor.level(l).tokens, rng.normal_matrix(1, p.config.extractor.style_width, 1.0).row(0), c);
  ParamStore store;
  ExtractorConfig multi = p.config.extractor;
  multi.heads = 4;
  const StyleTokenLayer four = StyleTokenLayer::create(store, "multi", multi, rng);
  for (int trial = 0; trial < 20; ++trial) check_token_layer(four, rng.normal_matrix(1, multi.style_width, 1.0).row(0), c);

  // Both HCE levels on real context windows.
  const auto& hce = model->predictor.hce();
  const auto pad = make_padding_utterance(p.corpus.front().mel.config);
  for (int index = 0; index < static_cast<int>(p.corpus.size()); index += 3) {
    const ContextWindow w = build_chapter_window(p.corpus, index, p.config.context_radius, pad);
    const SemanticEmbeddingSeq sem = embed_subwords(window_tokens(w), w.radius, p.embedder);
    const ContextEmbeddings ctx = hce_forward(sem, model->predictor);
    for (const Matrix& sw : ctx.attention.subword) c.weights(sw);
    c.weights(ctx.attention.sentence);
    check_pool(hce.subword_attention, ctx.subword, c);
    c.compare(ctx.attention.subword[static_cast<std::size_t>(ctx.current)],
              [&] { Graph g; Matrix m; hce.subword_attention(g, g.constant(ctx.subword), &m); return m; }());
    check_pool(hce.sentence_attention, ctx.sentence, c);
    RowVector sw;
    c.compare(ctx.global, softmax_pool(hce.sentence_attention.query->value.row(0), affine(ctx.sentence, hce.sentence_attention.key),
                                       affine(ctx.sentence, hce.sentence_attention.value), &sw));
    c.compare(ctx.attention.sentence, sw);
  }
  const bool ok = c.oracle_error <= 1e-6 && c.sum_error <= 1e-6 && c.min_weight >= 0.0;
  return {ok, "max oracle deviation " + fmt(c.oracle_error) + ", max |sum-1| " + fmt(c.sum_error) +
                  ", min weight " + fmt(c.min_weight)};
}

// ----------------------------------------------------- 3, 4 and 11

struct FullRun {
  std::unique_ptr<MsStyleModel> model;
  fs::path dir;
  long freeze_checks = 0;
  std::vector<std::string> freeze_violations;
  double distill_before = 0.0, distill_after = 0.0;
};

FullRun run_pipeline(const Pipeline& p, const std::string& name, bool instrument) {
  FullRun r;
  r.dir = fresh_dir(name);
  r.model = p.fresh_model();
  TrainerOptions opt;
  opt.work_dir = r.dir;
  Trainer t(*r.model, p.corpus, p.schedule, p.embedder, opt);
  std::vector<int> all(p.corpus.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);

  std::map<std::string, Matrix> frozen;
  if (instrument) {
    t.on_phase = [&](int stage, int phase, bool starting) {
      const FreezeMask mask = stage == 1 ? FreezeMask::stage1(static_cast<StyleLevel>(phase))
                              : stage == 2 ? FreezeMask::stage2()
                                           : FreezeMask::stage3();
      if (starting) {
        frozen.clear();
        for (const auto& name : mask.frozen_parameters(r.model->store))
          frozen.emplace(name, r.model->store.at(name).value);
        return;
      }
      for (const auto& [name, before] : frozen) {
        ++r.freeze_checks;
        if (!same_bytes(before, r.model->store.at(name).value))
          r.freeze_violations.push_back("stage " + std::to_string(stage) + " phase " + std::to_string(phase) + ": " + name);
      }
    };
  }
  t.run_stage(1);
  if (instrument) r.distill_before = t.mean_distillation(all);
  t.run_stage(2);
  if (instrument) r.distill_after = t.mean_distillation(all);
  t.run_stage(3);
  return r;
}

// ------------------------------------------------------------------ 5

Outcome overfit(const Pipeline& p) {
  auto model = p.fresh_model();
  for (auto& [name, param] : model->store.items()) param.trainable = name.rfind("predictor", 0) != 0;
  std::vector<int> batch(8);
  for (int i = 0; i < 8; ++i) batch[static_cast<std::size_t>(i)] = i;
  const auto pad = make_padding_utterance(p.corpus.front().mel.config);
  struct Item {
    ContextWindow window;
    std::vector<FrameRange> bounds;
    PhonemeSequence phonemes;
    VarianceTargets targets;
  };
  std::vector<Item> items;
  for (int i : batch) {
    const Utterance& u = p.corpus[static_cast<std::size_t>(i)];
    items.push_back({build_chapter_window(p.corpus, i, p.config.context_radius, pad),
                     subword_frame_boundaries(u.alignment), phoneme_sequence(u, model->inventory), variance_targets(u)});
  }
  Adam adam(p.schedule.adam_beta1, p.schedule.adam_beta2, p.schedule.adam_epsilon);
  const auto step = [&](long t) {
    model->store.zero_grad();
    double mel = 0.0;
    for (std::size_t k = 0; k < items.size(); ++k) {
      Graph g;
      const ExtractedVars ex = model->extractor.forward(g, items[k].window, items[k].bounds);
      const AcousticVars out = model->acoustic.forward(g, items[k].phonemes, ex.combined, &items[k].targets);
      const AcousticLosses l = model->acoustic.losses(g, out, items[k].targets, p.corpus[k].mel.frames);
      g.backward(ad::scale(l.total, 1.0 / static_cast<double>(items.size())));
      mel += l.mel.value()(0, 0) / static_cast<double>(items.size());
    }
    clip_grad_norm(model->store, p.schedule.grad_clip_norm);
    adam.step(model->store, lr_at(t, p.config.acoustic.model_width, p.schedule.warmup_steps));
    return mel;
  };
  const double initial = step(1);
  double last = initial;
  for (long t = 2; t <= 300; ++t) last = step(t);
  const double reduction = 1.0 - last / initial;
  return {reduction >= 0.6, "teacher-forced mel L1 " + fmt(initial) + " -> " + fmt(last) + " (" +
                                 fmt(100.0 * reduction) + "% reduction)"};
}

// ------------------------------------------------------------------ 6

Outcome dtw_oracle() {
  long cases = 0, mismatches = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_int_distribution<int> k(0, 2);
    for (int n = 1; n <= 6; ++n) {
      for (int m = 1; m <= 6; ++m) {
        Matrix a(n, 3), b(m, 3);
        for (Matrix* x : {&a, &b})
          for (Eigen::Index i = 0; i < x->size(); ++i) x->data()[i] = seed % 2 ? k(rng) : u(rng);
        Matrix cost(n, m);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < m; ++j) cost(i, j) = (a.row(i) - b.row(j)).norm();
        double best = std::numeric_limits<double>::infinity();
        std::function<void(int, int, double)> walk = [&](int i, int j, double acc) {
          acc += cost(i, j);
          if (i == n - 1 && j == m - 1) {
            best = std::min(best, acc);
            return;
          }
          if (i + 1 < n && j + 1 < m) walk(i + 1, j + 1, acc);
          if (j + 1 < m) walk(i, j + 1, acc);
          if (i + 1 < n) walk(i + 1, j, acc);
        };
        walk(0, 0, 0.0);
        const DtwResult r = dtw_align(a, b);
        r.path.validate(n, m);
        if (r.cost != best) ++mismatches;
        ++cases;
      }
    }
  }
  return {mismatches == 0, std::to_string(cases) + " length pairs, " + std::to_string(mismatches) + " cost mismatches"};
}

// ------------------------------------------------------------------ 7

Outcome metric_zero(const Pipeline& p) {
  const auto model = p.fresh_model();
  EvalOptions opt;
  opt.mode = EvalMode::kGroundTruth;
  const EvalReport r = evaluate_corpus(*model, p.corpus, p.embedder, opt);
  bool zero = r.complete() && r.utterances.size() == p.corpus.size();
  for (const auto& u : r.utterances)
    zero = zero && u.f0_rmse && *u.f0_rmse == 0.0 && u.energy_rmse == 0.0 && u.duration_mse == 0.0;
  zero = zero && r.aggregate.f0_rmse == 0.0 && r.aggregate.energy_rmse == 0.0 && r.aggregate.duration_mse == 0.0;
  return {zero, std::to_string(r.utterances.size()) + " utterances; aggregate F0 " + fmt(r.aggregate.f0_rmse.value_or(-1)) +
                    ", energy " + fmt(r.aggregate.energy_rmse.value_or(-1)) + ", duration " +
                    fmt(r.aggregate.duration_mse.value_or(-1))};
}

// ------------------------------------------------------------------ 8

Outcome shape_contract(const Pipeline& p) {
  const auto model = p.fresh_model();
  const auto pad = make_padding_utterance(p.corpus.front().mel.config);
  int bad_frames = 0, bad_counts = 0, bad_replication = 0;
  for (int i = 0; i < static_cast<int>(p.corpus.size()); ++i) {
    const Utterance& u = p.corpus[static_cast<std::size_t>(i)];
    const ContextWindow w = build_chapter_window(p.corpus, i, p.config.context_radius, pad);
    const VarianceTargets targets = variance_targets(u);
    const SynthesisResult s = synthesize_from_reference(*model, w, &targets);
    if (s.mel.rows() != u.alignment.total_frames()) ++bad_frames;

    const MultiScaleStyle ex = extract_multiscale(w, subword_frame_boundaries(u.alignment), model->extractor);
    const SemanticEmbeddingSeq sem = embed_subwords(window_tokens(w), w.radius, p.embedder);
    const PredictedStyles pr = predict_styles(hce_forward(sem, model->predictor), model->predictor);
    const auto n = static_cast<std::size_t>(u.alignment.num_subwords());
    if (ex.subword.size() != n || pr.subword.size() != n || static_cast<std::size_t>(ex.combined.rows()) != n) ++bad_counts;

    const PhonemeSequence seq = phoneme_sequence(u, model->inventory);
    const Matrix zeros = Matrix::Zero(seq.num_phonemes(), model->acoustic.model_width());
    const Matrix replicated = inject_style(zeros, ex.combined, seq.subword_of, model->acoustic);
    std::vector<int> identity(n);
    for (std::size_t k = 0; k < n; ++k) identity[k] = static_cast<int>(k);
    const Matrix per_subword = inject_style(Matrix::Zero(static_cast<Eigen::Index>(n), model->acoustic.model_width()),
                                            ex.combined, identity, model->acoustic);
    for (int ph = 0; ph < seq.num_phonemes(); ++ph)
      if (!same_bytes(replicated.row(ph), per_subword.row(seq.subword_of[static_cast<std::size_t>(ph)]))) ++bad_replication;
    if (seq.subword_of != u.alignment.subword_of_phoneme()) ++bad_replication;
  }
  const bool ok = bad_frames == 0 && bad_counts == 0 && bad_replication == 0;
  return {ok, std::to_string(p.corpus.size()) + " utterances; frame-count mismatches " + std::to_string(bad_frames) +
                  ", style-count mismatches " + std::to_string(bad_counts) + ", replication mismatches " +
                  std::to_string(bad_replication)};
}

// ------------------------------------------------------------------ 9

Outcome context_sensitivity(const Pipeline& p, const MsStyleModel& model) {
  const auto pad = make_padding_utterance(p.corpus.front().mel.config);
  int changed = 0, stable = 0, tried = 0;
  double min_diff = std::numeric_limits<double>::infinity();
  for (int index : {1, 9, 18, 26}) {
    const int next = index + 1;
    if (p.corpus[static_cast<std::size_t>(next)].chapter != p.corpus[static_cast<std::size_t>(index)].chapter) continue;
    ++tried;
    const Matrix base = synthesize(model, build_chapter_window(p.corpus, index, p.config.context_radius, pad), p.embedder).mel;

    std::vector<Utterance> same = p.corpus;
    const Matrix again = synthesize(model, build_chapter_window(same, index, p.config.context_radius, pad), p.embedder).mel;
    if (same_bytes(base, again)) ++stable;

    std::vector<Utterance> edited = p.corpus;
    Utterance& future = edited[static_cast<std::size_t>(next)];
    future.subwords = {"an", "entirely", "different", "future", "sentence"};
    future.text = "an entirely different future sentence";
    const Matrix other = synthesize(model, build_chapter_window(edited, index, p.config.context_radius, pad), p.embedder).mel;
    const double diff = other.rows() == base.rows() ? (other - base).cwiseAbs().sum()
                                                    : std::numeric_limits<double>::infinity();
    min_diff = std::min(min_diff, diff);
    if (diff > 0.0) ++changed;
  }
  const bool ok = tried > 0 && changed == tried && stable == tried;
  return {ok, std::to_string(tried) + " windows; future edit changed " + std::to_string(changed) + " (min L1 diff " +
                  fmt(min_diff) + "), no edit byte-identical " + std::to_string(stable)};
}

// ----------------------------------------------------------------- 10

Outcome adam_and_schedule() {
  ParamStore store;
  Parameter& x = store.create("x", Matrix::Constant(1, 1, -2.0));
  const double a = 3.0, c = 0.5;  // f(x) = a/2 (x - c)^2
  const double b1 = 0.9, b2 = 0.98, eps = 1e-9, lr = 0.05;
  Adam adam(b1, b2, eps);
  double m = 0.0, v = 0.0, xh = x.value(0, 0), worst = 0.0;
  for (int t = 1; t <= 10; ++t) {
    const double g = a * (xh - c);
    x.grad(0, 0) = a * (x.value(0, 0) - c);
    adam.step(store, lr);
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1 - std::pow(b1, t)), vhat = v / (1 - std::pow(b2, t));
    xh -= lr * mhat / (std::sqrt(vhat) + eps);
    worst = std::max(worst, std::abs(x.value(0, 0) - xh));
  }
  const int warmup = 4000, d = 256;
  long argmax = 1;
  for (long s = 1; s <= 3 * warmup; ++s)
    if (lr_at(s, d, warmup) > lr_at(argmax, d, warmup)) argmax = s;
  const double ratio = lr_at(warmup / 2, d, warmup) / lr_at(warmup, d, warmup);
  const bool ok = worst <= 1e-10 && argmax == warmup && std::abs(ratio - 0.5) < 1e-12;
  return {ok, "max |adam - hand| " + fmt(worst) + " over 10 steps; lr peak at step " + std::to_string(argmax) +
                  ", ratio " + fmt(ratio)};
}

}  // namespace

int main() {
  const Pipeline p;

  report(1, "residual reconstruction identity", 1.0, residual_algebra);
  report(2, "attention weights and softmax oracle", 10.0, [&] { return attention_correctness(p); });

  FullRun reference;
  report(3, "frozen parameters stay bit-exact", 300.0, [&] {
    reference = run_pipeline(p, "run-a", true);
    const bool ok = reference.freeze_checks > 0 && reference.freeze_violations.empty();
    std::string detail = std::to_string(reference.freeze_checks) + " frozen tensors checked across 5 phases, " +
                         std::to_string(reference.freeze_violations.size()) + " changed";
    if (!ok && !reference.freeze_violations.empty()) detail += " (first: " + reference.freeze_violations.front() + ")";
    return Outcome{ok, detail};
  });
  report(4, "distillation halves the stage-2 loss", 120.0, [&] {
    const double ratio = reference.distill_after / reference.distill_before;
    return Outcome{reference.model && ratio < 0.5, "mean distillation loss " + fmt(reference.distill_before) + " -> " +
                                                       fmt(reference.distill_after) + " (ratio " + fmt(ratio) + ")"};
  });
  report(5, "acoustic overfit on an 8-utterance batch", 180.0, [&] { return overfit(p); });
  report(6, "DTW equals exhaustive enumeration", 30.0, dtw_oracle);
  report(7, "ground truth scores zero", 0.0, [&] { return metric_zero(p); });
  report(8, "pipeline shape contract", 0.0, [&] { return shape_contract(p); });
  report(9, "future context changes the synthesis", 0.0, [&] {
    if (!reference.model) return Outcome{false, "no trained model"};
    return context_sensitivity(p, *reference.model);
  });
  report(10, "Adam step and learning-rate schedule", 0.0, adam_and_schedule);
  report(11, "determinism and resume", 600.0, [&] {
    if (!reference.model) return Outcome{false, "no reference run"};
    const FullRun twin = run_pipeline(p, "run-b", false);
    const bool same_log = slurp(reference.dir / "metrics.jsonl") == slurp(twin.dir / "metrics.jsonl");
    const bool same_params = same_parameters(reference.model->store, twin.model->store);

    // Interrupt in the middle of stage 1 (phase 1, step 100), then resume
    // from the latest checkpoint in a new model and trainer.
    const fs::path dir = fresh_dir("run-c");
    {
      auto model = p.fresh_model();
      TrainerOptions opt;
      opt.work_dir = dir;
      opt.max_steps = p.schedule.stage1_steps_per_level + p.schedule.stage1_steps_per_level / 2;
      Trainer t(*model, p.corpus, p.schedule, p.embedder, opt);
      if (t.run_stage(1)) return Outcome{false, "budget did not interrupt stage 1"};
    }
    const Checkpoint latest = Checkpoint::load(latest_checkpoint_path(dir));
    auto resumed = MsStyleModel::from_checkpoint(latest);
    TrainerOptions opt;
    opt.work_dir = dir;
    Trainer t(*resumed, p.corpus, p.schedule, p.embedder, opt);
    t.restore(latest);
    const std::string where = "stage " + std::to_string(t.progress().stage) + " phase " +
                              std::to_string(t.progress().phase) + " step " + std::to_string(t.progress().step);
    for (int s = 1; s <= 3; ++s) t.run_stage(s);
    const bool resume_log = slurp(reference.dir / "metrics.jsonl") == slurp(dir / "metrics.jsonl");
    const bool resume_params = same_parameters(reference.model->store, resumed->store);
    bool resume_ckpts = true;
    for (int s = 1; s <= 3; ++s)
      resume_ckpts = resume_ckpts && slurp(stage_checkpoint_path(reference.dir, s)) == slurp(stage_checkpoint_path(dir, s));
    const bool ok = same_log && same_params && resume_log && resume_params && resume_ckpts;
    return Outcome{ok, std::string("repeat run: log ") + (same_log ? "identical" : "DIFFERS") + ", parameters " +
                           (same_params ? "identical" : "DIFFER") + "; resumed from " + where + ": log " +
                           (resume_log ? "identical" : "DIFFERS") + ", parameters " +
                           (resume_params ? "identical" : "DIFFER") + ", stage checkpoints " +
                           (resume_ckpts ? "identical" : "DIFFER")};
  });

  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
