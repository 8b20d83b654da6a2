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

#include "msstyle/config.hpp"

#include "msstyle/errors.hpp"

namespace msstyle {

using nlohmann::json;

Preset parse_preset(const std::string& name) {
  if (name == "default") return Preset::kDefault;
  if (name == "tiny") return Preset::kTiny;
  throw ContractError("unknown preset '" + name + "' (expected default|tiny)");
}

std::string to_string(Preset preset) { return preset == Preset::kTiny ? "tiny" : "default"; }

ModelConfig ModelConfig::for_preset(Preset preset) {
  ModelConfig c;
  c.preset = preset;
  if (preset == Preset::kDefault) {
    c.extractor.conv_channels = {32, 32, 64, 64, 128, 128};
    return c;
  }
  c.max_global_frames = 400;
  c.extractor = {{4, 8}, 16, 4, 1};
  c.predictor = {32, 16, 8, 8, 16};
  c.acoustic.model_width = 32;
  c.acoustic.encoder_layers = 2;
  c.acoustic.decoder_layers = 2;
  c.acoustic.heads = 2;
  c.acoustic.ffn_hidden = 64;
  c.acoustic.ffn_kernel = 9;
  c.acoustic.variance_filter = 32;
  c.acoustic.variance_kernel = 3;
  c.acoustic.bins = 256;
  c.acoustic.max_phonemes = 64;
  return c;
}

void ModelConfig::validate() const {
  mel.validate();
  MSSTYLE_REQUIRE(context_radius >= 0, "model config: context_radius must be >= 0");
  MSSTYLE_REQUIRE(!extractor.conv_channels.empty(), "model config: need at least one conv layer");
  MSSTYLE_REQUIRE(extractor.style_width >= 1 && extractor.tokens >= 1 && extractor.heads >= 1,
                  "model config: style width, tokens and heads must be >= 1");
  MSSTYLE_REQUIRE(extractor.style_width % extractor.heads == 0,
                  "model config: style width must divide into heads");
  MSSTYLE_REQUIRE(acoustic.model_width % acoustic.heads == 0,
                  "model config: model width must divide into heads");
  MSSTYLE_REQUIRE(acoustic.bins >= 2, "model config: need at least two variance bins");
}

TrainingSchedule TrainingSchedule::for_preset(Preset preset) {
  TrainingSchedule s;
  if (preset == Preset::kTiny) {
    s.stage1_steps_per_level = 200;
    s.stage2_steps = 200;
    s.stage3_steps = 200;
    s.batch_size = 4;
    s.warmup_steps = 50;
    s.checkpoint_every = 50;
  }
  return s;
}

void TrainingSchedule::validate() const {
  MSSTYLE_REQUIRE(stage1_steps_per_level >= 1 && stage2_steps >= 1 && stage3_steps >= 1 &&
                      batch_size >= 1 && warmup_steps >= 1 && checkpoint_every >= 1,
                  "schedule: all counts must be >= 1");
  MSSTYLE_REQUIRE(stage3_lr_scale > 0.0 && stage3_lr_scale < 1.0,
                  "schedule: need 0 < stage3_lr_scale < 1");
  MSSTYLE_REQUIRE(lr_scale > 0.0, "schedule: lr_scale must be positive");
  MSSTYLE_REQUIRE(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0,
                  "schedule: Adam betas must lie in [0, 1)");
  MSSTYLE_REQUIRE(adam_epsilon > 0.0, "schedule: Adam epsilon must be positive");
}

json to_json(const MelConfig& c) {
  return {{"sample_rate", c.sample_rate}, {"frame_size", c.frame_size},
          {"hop_size", c.hop_size},       {"n_mels", c.n_mels},
          {"fmin", c.fmin},               {"fmax", c.fmax},
          {"log_floor", c.log_floor}};
}

MelConfig mel_config_from_json(const json& j, MelConfig c) {
  c.sample_rate = j.value("sample_rate", c.sample_rate);
  c.frame_size = j.value("frame_size", c.frame_size);
  c.hop_size = j.value("hop_size", c.hop_size);
  c.n_mels = j.value("n_mels", c.n_mels);
  c.fmin = j.value("fmin", c.fmin);
  c.fmax = j.value("fmax", c.fmax);
  c.log_floor = j.value("log_floor", c.log_floor);
  return c;
}

json to_json(const ModelConfig& c) {
  return {{"preset", to_string(c.preset)},
          {"mel", to_json(c.mel)},
          {"context_radius", c.context_radius},
          {"max_global_frames", c.max_global_frames},
          {"extractor",
           {{"conv_channels", c.extractor.conv_channels},
            {"style_width", c.extractor.style_width},
            {"tokens", c.extractor.tokens},
            {"heads", c.extractor.heads}}},
          {"predictor",
           {{"semantic_width", c.predictor.semantic_width},
            {"projection", c.predictor.projection},
            {"subword_hidden", c.predictor.subword_hidden},
            {"sentence_hidden", c.predictor.sentence_hidden},
            {"attention", c.predictor.attention}}},
          {"acoustic",
           {{"model_width", c.acoustic.model_width},
            {"encoder_layers", c.acoustic.encoder_layers},
            {"decoder_layers", c.acoustic.decoder_layers},
            {"heads", c.acoustic.heads},
            {"ffn_hidden", c.acoustic.ffn_hidden},
            {"ffn_kernel", c.acoustic.ffn_kernel},
            {"variance_filter", c.acoustic.variance_filter},
            {"variance_kernel", c.acoustic.variance_kernel},
            {"bins", c.acoustic.bins},
            {"max_phonemes", c.acoustic.max_phonemes}}}};
}

ModelConfig model_config_from_json(const json& j, ModelConfig c) {
  if (j.contains("preset")) {
    const Preset p = parse_preset(j.at("preset").get<std::string>());
    if (p != c.preset) c = ModelConfig::for_preset(p);
  }
  if (j.contains("mel")) c.mel = mel_config_from_json(j.at("mel"), c.mel);
  c.context_radius = j.value("context_radius", c.context_radius);
  c.max_global_frames = j.value("max_global_frames", c.max_global_frames);
  if (j.contains("extractor")) {
    const json& e = j.at("extractor");
    c.extractor.conv_channels = e.value("conv_channels", c.extractor.conv_channels);
    c.extractor.style_width = e.value("style_width", c.extractor.style_width);
    c.extractor.tokens = e.value("tokens", c.extractor.tokens);
    c.extractor.heads = e.value("heads", c.extractor.heads);
  }
  if (j.contains("predictor")) {
    const json& p = j.at("predictor");
    c.predictor.semantic_width = p.value("semantic_width", c.predictor.semantic_width);
    c.predictor.projection = p.value("projection", c.predictor.projection);
    c.predictor.subword_hidden = p.value("subword_hidden", c.predictor.subword_hidden);
    c.predictor.sentence_hidden = p.value("sentence_hidden", c.predictor.sentence_hidden);
    c.predictor.attention = p.value("attention", c.predictor.attention);
  }
  if (j.contains("acoustic")) {
    const json& a = j.at("acoustic");
    c.acoustic.model_width = a.value("model_width", c.acoustic.model_width);
    c.acoustic.encoder_layers = a.value("encoder_layers", c.acoustic.encoder_layers);
    c.acoustic.decoder_layers = a.value("decoder_layers", c.acoustic.decoder_layers);
    c.acoustic.heads = a.value("heads", c.acoustic.heads);
    c.acoustic.ffn_hidden = a.value("ffn_hidden", c.acoustic.ffn_hidden);
    c.acoustic.ffn_kernel = a.value("ffn_kernel", c.acoustic.ffn_kernel);
    c.acoustic.variance_filter = a.value("variance_filter", c.acoustic.variance_filter);
    c.acoustic.variance_kernel = a.value("variance_kernel", c.acoustic.variance_kernel);
    c.acoustic.bins = a.value("bins", c.acoustic.bins);
    c.acoustic.max_phonemes = a.value("max_phonemes", c.acoustic.max_phonemes);
  }
  c.validate();
  return c;
}

json to_json(const TrainingSchedule& s) {
  return {{"stage1_steps_per_level", s.stage1_steps_per_level},
          {"stage2_steps", s.stage2_steps},
          {"stage3_steps", s.stage3_steps},
          {"batch_size", s.batch_size},
          {"adam_beta1", s.adam_beta1},
          {"adam_beta2", s.adam_beta2},
          {"adam_epsilon", s.adam_epsilon},
          {"warmup_steps", s.warmup_steps},
          {"lr_scale", s.lr_scale},
          {"stage3_lr_scale", s.stage3_lr_scale},
          {"grad_clip_norm", s.grad_clip_norm},
          {"checkpoint_every", s.checkpoint_every},
          {"seed", s.seed}};
}

TrainingSchedule schedule_from_json(const json& j, TrainingSchedule s) {
  s.stage1_steps_per_level = j.value("stage1_steps_per_level", s.stage1_steps_per_level);
  s.stage2_steps = j.value("stage2_steps", s.stage2_steps);
  s.stage3_steps = j.value("stage3_steps", s.stage3_steps);
  s.batch_size = j.value("batch_size", s.batch_size);
  s.adam_beta1 = j.value("adam_beta1", s.adam_beta1);
  s.adam_beta2 = j.value("adam_beta2", s.adam_beta2);
  s.adam_epsilon = j.value("adam_epsilon", s.adam_epsilon);
  s.warmup_steps = j.value("warmup_steps", s.warmup_steps);
  s.lr_scale = j.value("lr_scale", s.lr_scale);
  s.stage3_lr_scale = j.value("stage3_lr_scale", s.stage3_lr_scale);
  s.grad_clip_norm = j.value("grad_clip_norm", s.grad_clip_norm);
  s.checkpoint_every = j.value("checkpoint_every", s.checkpoint_every);
  s.seed = j.value("seed", s.seed);
  s.validate();
  return s;
}

}  // namespace msstyle
