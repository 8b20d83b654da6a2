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

#include "msstyle/model.hpp"

#include <nlohmann/json.hpp>

#include "msstyle/errors.hpp"

namespace msstyle {

using ad::Graph;
using nlohmann::json;

std::unique_ptr<MsStyleModel> MsStyleModel::create(const ModelConfig& config,
                                                   PhonemeInventory inventory, std::uint64_t seed) {
  config.validate();
  std::unique_ptr<MsStyleModel> m(new MsStyleModel());
  m->config = config;
  m->inventory = std::move(inventory);
  Rng root(seed);
  Rng extractor_rng = root.fork("extractor");
  Rng predictor_rng = root.fork("predictor");
  Rng acoustic_rng = root.fork("acoustic");
  m->extractor = StyleExtractor(m->store, config, extractor_rng);
  m->predictor = StylePredictor(m->store, config, predictor_rng);
  m->acoustic = AcousticModel(m->store, config, m->inventory.size(), acoustic_rng);
  return m;
}

void MsStyleModel::save_into(Checkpoint& ckpt) const {
  store_parameters(store, ckpt);
  ckpt.texts["model/config"] = to_json(config).dump();
  ckpt.texts["model/inventory"] = json(inventory.symbols()).dump();
  ckpt.tensors["model/variance_stats"] = acoustic.stats().to_matrix();
}

std::unique_ptr<MsStyleModel> MsStyleModel::from_checkpoint(const Checkpoint& ckpt) {
  ModelConfig config;
  std::vector<std::string> symbols;
  try {
    const json c = json::parse(ckpt.text("model/config"));
    config = model_config_from_json(c, ModelConfig::for_preset(parse_preset(c.at("preset").get<std::string>())));
    symbols = json::parse(ckpt.text("model/inventory")).get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw InvalidInputError(std::string("checkpoint model records are malformed: ") + e.what());
  }
  auto m = create(config, PhonemeInventory(std::move(symbols)), 0);
  restore_parameters(m->store, ckpt);
  m->acoustic.set_stats(VarianceStats::from_matrix(ckpt.tensor("model/variance_stats")));
  return m;
}

Vector SynthesisResult::frame_pitch() const { return expand_by_duration(pitch_hz, durations); }

namespace {

SynthesisResult run_acoustic(const MsStyleModel& model, Graph& g, const Utterance& current,
                             const ad::Var& style, const VarianceTargets* teacher) {
  const PhonemeSequence seq = phoneme_sequence(current, model.inventory);
  const AcousticVars out = model.acoustic.forward(g, seq, style, teacher);
  SynthesisResult r;
  r.mel = out.mel.value();
  r.style = style.value();
  r.durations = out.variance.durations;
  r.pitch_hz = model.acoustic.stats().denormalize_pitch(out.variance.pitch.value().col(0));
  r.energy = model.acoustic.stats().denormalize_energy(out.variance.energy.value().col(0));
  return r;
}

}  // namespace

SynthesisResult synthesize(const MsStyleModel& model, const ContextWindow& window,
                           const SemanticEmbedder& embedder) {
  const SemanticEmbeddingSeq sem = embed_subwords(window_tokens(window), window.radius, embedder);
  Graph g;
  const PredictedVars pred = model.predictor.forward(g, sem);
  return run_acoustic(model, g, window.current(), pred.combined, nullptr);
}

SynthesisResult synthesize_from_reference(const MsStyleModel& model, const ContextWindow& window,
                                          const VarianceTargets* teacher) {
  const auto bounds = subword_frame_boundaries(window.current().alignment);
  Graph g;
  const ExtractedVars styles = model.extractor.forward(g, window, bounds);
  return run_acoustic(model, g, window.current(), styles.combined, teacher);
}

}  // namespace msstyle
