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

#include "msstyle/training.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "msstyle/errors.hpp"

namespace msstyle {

using ad::Graph;
using ad::Var;
using nlohmann::json;

const std::vector<std::string>& FreezeMask::groups() {
  static const std::vector<std::string> g = {"extractor.global", "extractor.sentence",
                                             "extractor.subword", "predictor", "acoustic"};
  return g;
}

FreezeMask FreezeMask::stage1(StyleLevel level) {
  FreezeMask m;
  for (const auto& g : groups()) m.frozen[g] = true;
  m.frozen[StyleExtractor::prefix(level)] = false;
  m.frozen["acoustic"] = false;
  return m;
}

FreezeMask FreezeMask::stage2() {
  FreezeMask m;
  for (const auto& g : groups()) m.frozen[g] = g != "predictor";
  return m;
}

FreezeMask FreezeMask::stage3() {
  FreezeMask m;
  for (const auto& g : groups()) m.frozen[g] = g.rfind("extractor", 0) == 0;
  return m;
}

namespace {

bool in_group(const std::string& name, const std::string& group) {
  return name.size() > group.size() && name.compare(0, group.size(), group) == 0 &&
         name[group.size()] == '.';
}

}  // namespace

void FreezeMask::apply(ParamStore& store) const {
  for (auto& [name, p] : store.items()) {
    bool assigned = false;
    for (const auto& [group, is_frozen] : frozen) {
      if (in_group(name, group)) {
        p.trainable = !is_frozen;
        assigned = true;
      }
    }
    MSSTYLE_REQUIRE(assigned, "freeze mask: parameter '" + name + "' belongs to no group");
  }
}

std::vector<std::string> FreezeMask::frozen_parameters(const ParamStore& store) const {
  std::vector<std::string> out;
  for (const auto& [name, p] : store.items())
    for (const auto& [group, is_frozen] : frozen)
      if (is_frozen && in_group(name, group)) out.push_back(name);
  return out;
}

Var distillation_loss(Graph& g, const PredictedVars& predicted, const MultiScaleStyle& extracted) {
  MSSTYLE_REQUIRE(predicted.subword.rows() == static_cast<Eigen::Index>(extracted.subword.size()),
                  "distillation loss: subword counts differ");
  MSSTYLE_REQUIRE(predicted.global.cols() == extracted.global.width(),
                  "distillation loss: style widths differ");
  return nn::mse_loss(predicted.global, g.constant(Matrix(extracted.global.vector))) +
         nn::mse_loss(predicted.sentence, g.constant(Matrix(extracted.sentence.vector))) +
         nn::mse_loss(predicted.subword, g.constant(extracted.subword_matrix()));
}

double distillation_loss(const MultiScaleStyle& extracted, const PredictedStyles& predicted) {
  Graph g;
  PredictedVars vars;
  vars.global = g.constant(Matrix(predicted.global.vector));
  vars.sentence = g.constant(Matrix(predicted.sentence.vector));
  vars.subword = g.constant(predicted.subword_matrix());
  return distillation_loss(g, vars, extracted).value()(0, 0);
}

std::string StepRecord::to_json_line() const {
  json j = {{"stage", stage}, {"phase", phase}, {"step", step}, {"lr", lr},
            {"loss", {{"mel", mel}, {"duration", duration}, {"pitch", pitch}, {"energy", energy},
                      {"distill", distill}, {"total", total}}}};
  return j.dump();
}

std::filesystem::path stage_checkpoint_path(const std::filesystem::path& work_dir, int stage) {
  return work_dir / "checkpoints" / ("stage" + std::to_string(stage) + ".ckpt");
}

std::filesystem::path latest_checkpoint_path(const std::filesystem::path& work_dir) {
  return work_dir / "checkpoints" / "latest.ckpt";
}

Trainer::Trainer(MsStyleModel& model, std::vector<Utterance> corpus, TrainingSchedule schedule,
                 const SemanticEmbedder& embedder, TrainerOptions options)
    : model_(model),
      corpus_(std::move(corpus)),
      schedule_(schedule),
      embedder_(embedder),
      options_(std::move(options)),
      adam_(schedule.adam_beta1, schedule.adam_beta2, schedule.adam_epsilon),
      budget_(options_.max_steps) {
  schedule_.validate();
  MSSTYLE_REQUIRE(!corpus_.empty(), "trainer: empty training corpus");
  MSSTYLE_REQUIRE(embedder.width() == model.predictor.semantic_width(),
                  "trainer: embedder width differs from the predictor's semantic width");
  pad_ = make_padding_utterance(corpus_.front().mel.config);
  items_.resize(corpus_.size());
}

long Trainer::steps_in_phase(int stage) const {
  switch (stage) {
    case 1: return schedule_.stage1_steps_per_level;
    case 2: return schedule_.stage2_steps;
    case 3: return schedule_.stage3_steps;
  }
  throw ContractError("unknown training stage " + std::to_string(stage));
}

double Trainer::learning_rate(int stage, long step) const {
  const double lr = lr_at(step, model_.config.acoustic.model_width, schedule_.warmup_steps,
                          schedule_.lr_scale);
  return stage == 3 ? lr * schedule_.stage3_lr_scale : lr;
}

std::vector<int> Trainer::batch_indices(int stage, int phase, long step) const {
  std::vector<int> out;
  for (int b = 0; b < schedule_.batch_size; ++b) {
    std::uint64_t key = mix64(schedule_.seed ^ 0x7261696eULL);
    for (std::uint64_t part : {std::uint64_t(stage), std::uint64_t(phase), std::uint64_t(step), std::uint64_t(b)})
      key = mix64(key ^ part);
    out.push_back(static_cast<int>(key % corpus_.size()));
  }
  return out;
}

ContextWindow Trainer::window(int index) const {
  return build_chapter_window(corpus_, index, model_.config.context_radius, pad_);
}

Trainer::Item& Trainer::item(int index) {
  auto& slot = items_[static_cast<std::size_t>(index)];
  if (!slot) {
    const Utterance& u = corpus_[static_cast<std::size_t>(index)];
    slot = Item{phoneme_sequence(u, model_.inventory), variance_targets(u),
                subword_frame_boundaries(u.alignment), std::nullopt};
  }
  return *slot;
}

const SemanticEmbeddingSeq& Trainer::semantic(int index) {
  Item& it = item(index);
  if (!it.semantic) {
    const ContextWindow w = window(index);
    it.semantic = embed_subwords(window_tokens(w), w.radius, embedder_);
  }
  return *it.semantic;
}

MultiScaleStyle Trainer::extractor_targets(int index) {
  if (options_.cache_targets) {
    auto it = target_cache_.find(index);
    if (it != target_cache_.end()) return it->second;
  }
  MultiScaleStyle s = extract_multiscale(window(index), item(index).bounds, model_.extractor);
  if (options_.cache_targets) target_cache_.emplace(index, s);
  return s;
}

StepRecord Trainer::step(int stage, int phase, long t) {
  const std::vector<int> batch = batch_indices(stage, phase, t);
  const double inv = 1.0 / static_cast<double>(batch.size());
  StepRecord rec{stage, phase, t, learning_rate(stage, t)};
  model_.store.zero_grad();
  for (int index : batch) {
    Item& it = item(index);
    const Utterance& u = corpus_[static_cast<std::size_t>(index)];
    Graph g;
    Var total;
    std::optional<AcousticLosses> acoustic;
    std::optional<Var> distill;
    if (stage == 1) {
      const ExtractedVars ex = model_.extractor.forward(g, window(index), it.bounds,
                                                        LevelMask::up_to(static_cast<StyleLevel>(phase)));
      const AcousticVars out = model_.acoustic.forward(g, it.phonemes, ex.combined, &it.targets);
      acoustic = model_.acoustic.losses(g, out, it.targets, u.mel.frames);
      total = acoustic->total;
    } else {
      const MultiScaleStyle target = extractor_targets(index);
      const PredictedVars pred = model_.predictor.forward(g, semantic(index));
      distill = distillation_loss(g, pred, target);
      total = *distill;
      if (stage == 3) {
        const AcousticVars out = model_.acoustic.forward(g, it.phonemes, pred.combined, &it.targets);
        acoustic = model_.acoustic.losses(g, out, it.targets, u.mel.frames);
        total = acoustic->total + *distill;
      }
    }
    if (acoustic) {
      rec.mel += inv * acoustic->mel.value()(0, 0);
      rec.duration += inv * acoustic->duration.value()(0, 0);
      rec.pitch += inv * acoustic->pitch.value()(0, 0);
      rec.energy += inv * acoustic->energy.value()(0, 0);
    }
    if (distill) rec.distill += inv * distill->value()(0, 0);
    rec.total += inv * total.value()(0, 0);
    if (!std::isfinite(total.value()(0, 0))) abort_numeric(rec, batch);
    g.backward(ad::scale(total, inv));
  }
  const double norm = clip_grad_norm(model_.store, schedule_.grad_clip_norm);
  if (!std::isfinite(norm)) abort_numeric(rec, batch);
  adam_.step(model_.store, rec.lr);
  return rec;
}

bool Trainer::run_stage(int stage) {
  MSSTYLE_REQUIRE(stage >= 1 && stage <= 3, "trainer: stage must be 1, 2 or 3");
  if (progress_.stage > stage) return true;
  if (progress_.stage < stage) progress_ = {stage, 0, 0};
  long& budget = budget_;
  const long steps = steps_in_phase(stage);
  for (; progress_.phase < phases(stage); ++progress_.phase, progress_.step = 0) {
    const int phase = progress_.phase;
    const FreezeMask mask = stage == 1 ? FreezeMask::stage1(static_cast<StyleLevel>(phase))
                            : stage == 2 ? FreezeMask::stage2()
                                         : FreezeMask::stage3();
    mask.apply(model_.store);
    // Moments and warm-up restart with every newly trainable set.
    if (progress_.step == 0) adam_.reset();
    if (on_phase) on_phase(stage, phase, true);
    while (progress_.step < steps) {
      if (budget == 0) {
        save_latest();
        return false;
      }
      const StepRecord rec = step(stage, phase, progress_.step + 1);
      ++progress_.step;
      if (budget > 0) --budget;
      history_.push_back(rec);
      append_metrics(rec);
      if (progress_.step % schedule_.checkpoint_every == 0) save_latest();
    }
    if (on_phase) on_phase(stage, phase, false);
  }
  progress_ = {stage + 1, 0, 0};
  save_latest();
  if (options_.work_dir) {
    Checkpoint ckpt;
    write_checkpoint(ckpt);
    ckpt.save(stage_checkpoint_path(*options_.work_dir, stage));
  }
  return true;
}

void Trainer::write_checkpoint(Checkpoint& ckpt) const {
  model_.save_into(ckpt);
  for (const auto& [name, m] : adam_.state().m) ckpt.tensors["optim/m/" + name] = m;
  for (const auto& [name, v] : adam_.state().v) ckpt.tensors["optim/v/" + name] = v;
  ckpt.integers["optim/t"] = adam_.state().t;
  ckpt.integers["progress/stage"] = progress_.stage;
  ckpt.integers["progress/phase"] = progress_.phase;
  ckpt.integers["progress/step"] = progress_.step;
  ckpt.texts["train/schedule"] = to_json(schedule_).dump();
}

void Trainer::restore(const Checkpoint& ckpt) {
  restore_parameters(model_.store, ckpt);
  model_.acoustic.set_stats(VarianceStats::from_matrix(ckpt.tensor("model/variance_stats")));
  AdamState& s = adam_.state();
  s = {};
  for (const auto& [name, m] : ckpt.tensors) {
    if (name.rfind("optim/m/", 0) == 0) s.m[name.substr(8)] = m;
    if (name.rfind("optim/v/", 0) == 0) s.v[name.substr(8)] = m;
  }
  s.t = ckpt.integers.count("optim/t") ? ckpt.integer("optim/t") : 0;
  if (ckpt.integers.count("progress/stage")) {
    progress_.stage = static_cast<int>(ckpt.integer("progress/stage"));
    progress_.phase = static_cast<int>(ckpt.integer("progress/phase"));
    progress_.step = ckpt.integer("progress/step");
  }
  target_cache_.clear();
  if (options_.work_dir) trim_metrics_log(*options_.work_dir / "metrics.jsonl", progress_);
}

void trim_metrics_log(const std::filesystem::path& file, const Progress& p) {
  if (!std::filesystem::exists(file)) return;
  std::ifstream in(file);
  std::string kept;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) break;  // a torn final line
    const int stage = j.value("stage", 0), phase = j.value("phase", 0);
    const long step = j.value("step", 0L);
    const bool before = stage < p.stage ||
                        (stage == p.stage && (phase < p.phase || (phase == p.phase && step <= p.step)));
    if (before) kept += line + '\n';
  }
  in.close();
  std::ofstream(file, std::ios::trunc) << kept;
}

void Trainer::save_latest() const {
  if (!options_.work_dir) return;
  Checkpoint ckpt;
  write_checkpoint(ckpt);
  ckpt.save(latest_checkpoint_path(*options_.work_dir));
}

void Trainer::append_metrics(const StepRecord& r) const {
  if (!options_.work_dir) return;
  std::filesystem::create_directories(*options_.work_dir);
  std::ofstream out(*options_.work_dir / "metrics.jsonl", std::ios::app);
  out << r.to_json_line() << '\n';
}

void Trainer::abort_numeric(const StepRecord& r, const std::vector<int>& batch) const {
  json diag;
  diag["stage"] = r.stage;
  diag["phase"] = r.phase;
  diag["step"] = r.step;
  std::vector<std::string> ids;
  for (int i : batch) ids.push_back(corpus_[static_cast<std::size_t>(i)].id);
  diag["batch"] = ids;
  json norms = json::object();
  for (const auto& [name, p] : model_.store.items()) norms[name] = p.value.norm();
  diag["parameter_norms"] = norms;
  const std::string text = diag.dump(2);
  if (options_.work_dir) {
    std::filesystem::create_directories(*options_.work_dir);
    std::ofstream(*options_.work_dir / "numeric_failure.json") << text << '\n';
  }
  throw NumericError("non-finite loss at stage " + std::to_string(r.stage) + " step " +
                         std::to_string(r.step),
                     text);
}

double Trainer::mel_l1(std::span<const int> indices, bool predictor_styles) {
  double sum = 0.0;
  for (int index : indices) {
    Item& it = item(index);
    Graph g;
    Var style = predictor_styles
                    ? model_.predictor.forward(g, semantic(index)).combined
                    : model_.extractor.forward(g, window(index), it.bounds).combined;
    const AcousticVars out = model_.acoustic.forward(g, it.phonemes, style, &it.targets);
    sum += nn::l1_loss(out.mel, g.constant(corpus_[static_cast<std::size_t>(index)].mel.frames)).value()(0, 0);
  }
  return sum / static_cast<double>(indices.size());
}

double Trainer::mean_distillation(std::span<const int> indices) {
  double sum = 0.0;
  for (int index : indices) {
    Graph g;
    sum += distillation_loss(g, model_.predictor.forward(g, semantic(index)), extractor_targets(index))
               .value()(0, 0);
  }
  return sum / static_cast<double>(indices.size());
}

}  // namespace msstyle
