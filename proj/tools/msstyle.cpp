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

// msstyle: prepare features, train the three stages, synthesize and evaluate.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "msstyle/errors.hpp"
#include "msstyle/eval.hpp"
#include "msstyle/io.hpp"
#include "msstyle/training.hpp"
#include "msstyle/vocoder.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace msstyle;

namespace {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kMissingInput = 3,
  kInvariant = 4,
  kNumeric = 5,
  kPartialReport = 6,
  kExternal = 7,
};

struct Options {
  std::string config_path;
  std::string preset;
  std::uint64_t seed = 1234;
  fs::path work_dir = "msstyle-work";
  std::string cache_dir;
  std::string embedder_cmd;

  int toy = 0;
  std::string manifest;

  int stage = 0;
  bool resume = false;
  long max_steps = -1;

  std::string checkpoint;
  std::vector<std::string> ids;
  bool wav = false;

  std::string split = "eval";
  bool ground_truth = false;
  std::string f0_source = "model";
};

struct RunConfig {
  ModelConfig model;
  TrainingSchedule schedule;
  std::uint64_t seed = 0;
  fs::path work_dir;
  fs::path cache_dir;
};

RunConfig resolve(const Options& o) {
  json file = json::object();
  if (!o.config_path.empty()) {
    try {
      file = json::parse(io::read_text(o.config_path));
    } catch (const json::exception& e) {
      throw InvalidInputError(o.config_path + ": " + e.what());
    }
  }
  std::string preset_name = o.preset;
  if (preset_name.empty()) preset_name = file.value("preset", std::string("default"));
  const Preset preset = parse_preset(preset_name);

  RunConfig rc;
  rc.model = ModelConfig::for_preset(preset);
  rc.schedule = TrainingSchedule::for_preset(preset);
  try {
    if (file.contains("model")) rc.model = model_config_from_json(file.at("model"), rc.model);
    if (file.contains("schedule")) rc.schedule = schedule_from_json(file.at("schedule"), rc.schedule);
  } catch (const json::exception& e) {
    throw InvalidInputError(o.config_path + ": " + e.what());
  }
  rc.model.preset = preset;
  rc.seed = o.seed;
  rc.schedule.seed = o.seed;
  rc.model.validate();
  rc.schedule.validate();
  rc.work_dir = o.work_dir;
  rc.cache_dir = o.cache_dir.empty() ? o.work_dir / "cache" : fs::path(o.cache_dir);
  return rc;
}

// Everything needed to replay the run; also accepted back through --config.
void write_snapshot(const RunConfig& rc, const std::string& command, const std::vector<std::string>& argv) {
  const json j = {{"command", command},
                  {"argv", argv},
                  {"preset", to_string(rc.model.preset)},
                  {"seed", rc.seed},
                  {"work_dir", rc.work_dir.string()},
                  {"cache_dir", rc.cache_dir.string()},
                  {"model", to_json(rc.model)},
                  {"schedule", to_json(rc.schedule)}};
  io::write_text(rc.work_dir / "runs" / (command + ".json"), j.dump(2) + "\n");
}

std::unique_ptr<SemanticEmbedder> make_embedder(const Options& o, int width) {
  if (!o.embedder_cmd.empty()) return std::make_unique<ExternalEmbedder>(o.embedder_cmd, width);
  return std::make_unique<HashEmbedder>(width);
}

std::vector<Utterance> load_cache(const RunConfig& rc) {
  if (!fs::exists(rc.cache_dir / "index.jsonl"))
    throw MissingInputError("no prepared features at " + (rc.cache_dir / "index.jsonl").string() +
                            " (run `msstyle prepare` first)");
  std::vector<Utterance> corpus = io::read_feature_cache(rc.cache_dir);
  std::stable_sort(corpus.begin(), corpus.end(),
                   [](const Utterance& a, const Utterance& b) { return a.order_index < b.order_index; });
  return corpus;
}

std::unique_ptr<MsStyleModel> load_model(const fs::path& path) {
  return MsStyleModel::from_checkpoint(Checkpoint::load(path));
}

// ---------------------------------------------------------------- prepare

int write_toy_corpus(const RunConfig& rc, int n) {
  ToyCorpusOptions shape;
  shape.mel = rc.model.mel;
  const std::vector<ToyUtterance> toy = generate_toy_corpus_with_audio(rc.seed, n, shape);
  const fs::path corpus_dir = rc.work_dir / "corpus";
  fs::remove_all(corpus_dir);
  std::vector<io::ManifestRecord> records;
  std::vector<Utterance> utterances;
  for (const ToyUtterance& t : toy) {
    const Utterance& u = t.utterance;
    const std::string wav = "wav/" + u.id + ".wav", align = "align/" + u.id + ".json";
    io::write_wav(corpus_dir / wav, t.waveform, static_cast<int>(shape.mel.sample_rate));
    io::write_alignment(corpus_dir / align, {u.phonemes, u.alignment});
    records.push_back({u.id, u.text, wav, align, u.order_index, u.chapter});
    utterances.push_back(u);
  }
  io::write_manifest(corpus_dir / "manifest.jsonl", records);
  fs::remove_all(rc.cache_dir);
  io::write_feature_cache(rc.cache_dir, utterances);
  long frames = 0;
  for (const Utterance& u : utterances) frames += u.mel.num_frames();
  std::printf("prepared %zu toy utterances (%ld frames) in %s; sources in %s\n", utterances.size(),
              frames, rc.cache_dir.string().c_str(), corpus_dir.string().c_str());
  return kOk;
}

Utterance prepare_record(const io::ManifestRecord& r, const fs::path& base, const MelConfig& mc) {
  const auto resolve_path = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  if (r.audio_path.empty()) throw InvalidInputError("manifest record has no audio_path");
  const io::Waveform wav = io::read_wav(resolve_path(r.audio_path));
  if (wav.sample_rate != static_cast<int>(mc.sample_rate))
    throw InvalidInputError("sample rate " + std::to_string(wav.sample_rate) + " differs from the configured " +
                            std::to_string(static_cast<int>(mc.sample_rate)));
  const io::AlignmentFile align = io::read_alignment(resolve_path(r.alignment_path));
  Utterance u;
  u.id = r.id;
  u.text = r.text;
  u.subwords = tokenize(r.text);
  u.phonemes = align.phonemes;
  u.alignment = align.alignment;
  u.mel = compute_mel(wav.samples, mc);
  u.pitch = estimate_pitch(wav.samples, mc);
  u.energy = frame_energy(u.mel.frames);
  u.order_index = r.order_index;
  u.chapter = r.chapter;
  u.validate();
  return u;
}

int cmd_prepare(const Options& o, const RunConfig& rc) {
  if ((o.toy > 0) == !o.manifest.empty())
    throw CLI::ValidationError("prepare", "give exactly one of --toy N or --manifest PATH");
  if (o.toy > 0) return write_toy_corpus(rc, o.toy);

  const fs::path manifest = o.manifest;
  const std::vector<io::ManifestRecord> records = io::read_manifest(manifest);
  std::vector<Utterance> good;
  json failures = json::array();
  bool missing = false;
  for (const auto& r : records) {
    try {
      good.push_back(prepare_record(r, manifest.parent_path(), rc.model.mel));
    } catch (const MissingInputError& e) {
      missing = true;
      failures.push_back({{"id", r.id}, {"error", e.what()}});
    } catch (const std::exception& e) {
      failures.push_back({{"id", r.id}, {"error", e.what()}});
    }
  }
  fs::remove_all(rc.cache_dir);
  io::write_feature_cache(rc.cache_dir, good);
  io::write_text(rc.cache_dir / "prepare_report.json",
                 json({{"manifest", manifest.string()}, {"prepared", good.size()}, {"failures", failures}}).dump(2) + "\n");
  long frames = 0;
  for (const Utterance& u : good) frames += u.mel.num_frames();
  std::printf("prepared %zu of %zu utterances (%ld frames) in %s\n", good.size(), records.size(), frames,
              rc.cache_dir.string().c_str());
  for (const auto& f : failures)
    std::fprintf(stderr, "error: utterance %s: %s\n", f.at("id").get<std::string>().c_str(),
                 f.at("error").get<std::string>().c_str());
  if (failures.empty()) return kOk;
  return missing ? kMissingInput : kInvariant;
}

// ------------------------------------------------------------------ train

int cmd_train(const Options& o, const RunConfig& rc) {
  const int stage = o.stage;
  const fs::path latest = latest_checkpoint_path(rc.work_dir);
  std::optional<Checkpoint> resume_from;
  if (o.resume && fs::exists(latest)) {
    Checkpoint c = Checkpoint::load(latest);
    const long at = c.integers.count("progress/stage") ? c.integer("progress/stage") : 0;
    if (at > stage) {
      std::printf("stage %d already complete according to %s\n", stage, latest.string().c_str());
      return kOk;
    }
    if (at == stage) resume_from = std::move(c);
  }

  const fs::path prereq = stage_checkpoint_path(rc.work_dir, stage - 1);
  if (!resume_from && stage > 1 && !fs::exists(prereq))
    throw MissingInputError("stage " + std::to_string(stage) + " needs the stage " + std::to_string(stage - 1) +
                            " checkpoint " + prereq.string());
  const CorpusSplit split = split_by_chapter(load_cache(rc), 1);
  if (split.train.empty()) throw InvalidInputError("training split is empty");

  std::unique_ptr<MsStyleModel> model;
  std::optional<Checkpoint> start;
  if (resume_from) {
    model = MsStyleModel::from_checkpoint(*resume_from);
    start = std::move(resume_from);
  } else if (stage == 1) {
    model = MsStyleModel::create(rc.model, PhonemeInventory::from_corpus(split.train), rc.seed);
    model->acoustic.set_stats(VarianceStats::from_corpus(split.train));
    trim_metrics_log(rc.work_dir / "metrics.jsonl", Progress{1, 0, 0});
  } else {
    start = Checkpoint::load(prereq);
    model = MsStyleModel::from_checkpoint(*start);
  }

  const auto embedder = make_embedder(o, model->config.predictor.semantic_width);
  TrainerOptions topt;
  topt.work_dir = rc.work_dir;
  topt.max_steps = o.max_steps;
  Trainer trainer(*model, split.train, rc.schedule, *embedder, topt);
  if (start) trainer.restore(*start);

  const bool finished = trainer.run_stage(stage);
  const Progress& p = trainer.progress();
  if (!finished) {
    std::printf("stopped in stage %d phase %d after step %ld; continue with --resume\n", p.stage, p.phase, p.step);
    return kOk;
  }
  if (!trainer.history().empty()) {
    const StepRecord& last = trainer.history().back();
    std::printf("stage %d done: last step loss total %.6f (mel %.6f, distill %.6f)\n", stage, last.total, last.mel,
                last.distill);
  }
  std::printf("wrote %s\n", stage_checkpoint_path(rc.work_dir, stage).string().c_str());
  return kOk;
}

// ------------------------------------------------------------- synthesize

fs::path checkpoint_arg(const Options& o, const RunConfig& rc) {
  return o.checkpoint.empty() ? stage_checkpoint_path(rc.work_dir, 3) : fs::path(o.checkpoint);
}

int cmd_synthesize(const Options& o, const RunConfig& rc) {
  const auto model = load_model(checkpoint_arg(o, rc));
  const std::vector<Utterance> corpus = load_cache(rc);
  std::vector<std::string> ids = o.ids;
  if (ids.empty())
    for (const Utterance& u : split_by_chapter(corpus, 1).eval) ids.push_back(u.id);

  const auto embedder = make_embedder(o, model->config.predictor.semantic_width);
  const auto pad = make_padding_utterance(corpus.front().mel.config);
  const GriffinLimVocoder vocoder;
  const fs::path out = rc.work_dir / "synth";
  fs::create_directories(out);
  for (const std::string& id : ids) {
    const auto it = std::find_if(corpus.begin(), corpus.end(), [&](const Utterance& u) { return u.id == id; });
    if (it == corpus.end())
      throw MissingInputError("utterance '" + id + "' is not in " + (rc.cache_dir / "index.jsonl").string());
    const int index = static_cast<int>(it - corpus.begin());
    const ContextWindow w = build_chapter_window(corpus, index, model->config.context_radius, pad);
    const SynthesisResult r = synthesize(*model, w, *embedder);
    io::write_blob(out / (id + ".mel"), r.mel);
    const json meta = {{"id", id},
                       {"frames", r.mel.rows()},
                       {"durations", r.durations},
                       {"pitch_hz", std::vector<double>(r.pitch_hz.data(), r.pitch_hz.data() + r.pitch_hz.size())},
                       {"energy", std::vector<double>(r.energy.data(), r.energy.data() + r.energy.size())}};
    io::write_text(out / (id + ".json"), meta.dump(2) + "\n");
    if (o.wav)
      io::write_wav(out / (id + ".wav"), vocoder.synthesize(r.mel, model->config.mel),
                    static_cast<int>(model->config.mel.sample_rate));
    std::printf("%s: %ld frames -> %s\n", id.c_str(), static_cast<long>(r.mel.rows()),
                (out / (id + ".mel")).string().c_str());
  }
  return kOk;
}

// --------------------------------------------------------------- evaluate

int cmd_evaluate(const Options& o, const RunConfig& rc) {
  const std::vector<Utterance> corpus = load_cache(rc);
  std::vector<Utterance> split;
  if (o.split == "all") {
    split = corpus;
  } else {
    CorpusSplit s = split_by_chapter(corpus, 1);
    split = o.split == "train" ? std::move(s.train) : std::move(s.eval);
  }
  if (split.empty()) throw InvalidInputError("the " + o.split + " split is empty");

  EvalOptions eopt;
  std::unique_ptr<MsStyleModel> model;
  const fs::path ckpt = checkpoint_arg(o, rc);
  if (o.ground_truth) {
    eopt.mode = EvalMode::kGroundTruth;
    // Only the context radius matters here; a checkpoint is optional.
    model = fs::exists(ckpt) ? load_model(ckpt)
                             : MsStyleModel::create(rc.model, PhonemeInventory::from_corpus(corpus), rc.seed);
  } else {
    model = load_model(ckpt);
  }
  const GriffinLimVocoder vocoder;
  if (o.f0_source == "vocoder") {
    const MelConfig mc = model->config.mel;
    eopt.f0_from_mel = [&vocoder, mc](const Matrix& mel) { return vocoded_pitch(vocoder, mel, mc); };
  }
  const auto embedder = make_embedder(o, model->config.predictor.semantic_width);
  const EvalReport report = evaluate_corpus(*model, split, *embedder, eopt);
  const json j = report.to_json();
  validate_report_json(j);
  const fs::path out = rc.work_dir / "eval";
  io::write_text(out / "report.json", j.dump(2) + "\n");
  io::write_text(out / "report.txt", report.table());
  std::fputs(report.table().c_str(), stdout);
  std::printf("report: %s\n", (out / "report.json").string().c_str());
  if (!report.complete()) {
    std::fprintf(stderr, "error: %zu of %zu utterances failed; the report is partial\n", report.failures.size(),
                 split.size());
    return kPartialReport;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-scale style modelling for expressive speech synthesis"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--config", o.config_path, "JSON file with \"model\" and \"schedule\" overrides")
      ->check(CLI::ExistingFile);
  app.add_option("--preset", o.preset, "Model size preset (default when neither flag nor config sets it)")
      ->check(CLI::IsMember({"default", "tiny"}));
  app.add_option("--seed", o.seed, "Root seed for corpus generation, initialization and batching");
  app.add_option("--work-dir", o.work_dir, "Run directory (created if absent)");
  app.add_option("--cache", o.cache_dir, "Prepared-feature directory (default: <work-dir>/cache)");
  app.add_option("--embedder-cmd", o.embedder_cmd, "External semantic embedder command (default: built-in hash embedder)");

  auto* prepare = app.add_subcommand("prepare", "Extract features into the cache");
  prepare->add_option("--toy", o.toy, "Generate a synthetic corpus of N utterances")->check(CLI::PositiveNumber);
  prepare->add_option("--manifest", o.manifest, "Corpus manifest (JSON lines)");

  auto* train = app.add_subcommand("train", "Run one training stage");
  train->add_option("--stage", o.stage, "1: extractor + acoustic, 2: distillation, 3: joint fine-tuning")
      ->required()
      ->check(CLI::Range(1, 3));
  train->add_flag("--resume", o.resume, "Continue from <work-dir>/checkpoints/latest.ckpt");
  train->add_option("--max-steps", o.max_steps, "Stop after this many optimizer steps")->group("");

  auto* synth = app.add_subcommand("synthesize", "Predictor-conditioned synthesis");
  synth->add_option("--checkpoint", o.checkpoint, "Model checkpoint (default: stage 3)");
  synth->add_option("--ids", o.ids, "Utterance ids (default: the eval split)")->delimiter(',');
  synth->add_flag("--wav", o.wav, "Also write placeholder Griffin-Lim waveforms");

  auto* evaluate = app.add_subcommand("evaluate", "Objective metrics against the reference features");
  evaluate->add_option("--checkpoint", o.checkpoint, "Model checkpoint (default: stage 3)");
  evaluate->add_option("--split", o.split, "eval, train or all")->check(CLI::IsMember({"eval", "train", "all"}));
  evaluate->add_flag("--ground-truth", o.ground_truth, "Score the reference features against themselves");
  evaluate->add_option("--f0-source", o.f0_source, "model (predicted pitch) or vocoder (pitch tracker on Griffin-Lim audio)")
      ->check(CLI::IsMember({"model", "vocoder"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const RunConfig rc = resolve(o);
    fs::create_directories(rc.work_dir);
    write_snapshot(rc, command == "train" ? "train-stage" + std::to_string(o.stage) : command,
                   std::vector<std::string>(argv, argv + argc));
    if (command == "prepare") return cmd_prepare(o, rc);
    if (command == "train") return cmd_train(o, rc);
    if (command == "synthesize") return cmd_synthesize(o, rc);
    return cmd_evaluate(o, rc);
  } catch (const CLI::ValidationError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsage;
  } catch (const MissingInputError& e) {
    std::fprintf(stderr, "missing input: %s\n", e.what());
    return kMissingInput;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s (diagnostics in numeric_failure.json)\n", e.what());
    return kNumeric;
  } catch (const ExternalDependencyError& e) {
    std::fprintf(stderr, "external dependency failed: %s\n", e.what());
    return kExternal;
  } catch (const InvalidInputError& e) {
    std::fprintf(stderr, "invalid input: %s\n", e.what());
    return kInvariant;
  } catch (const ContractError& e) {
    std::fprintf(stderr, "invariant violated: %s\n", e.what());
    return kInvariant;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  }
}
