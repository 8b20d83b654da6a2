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

#include "msstyle/eval.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace msstyle {

using nlohmann::json;

void DtwPath::validate(int n_pred, int n_ref) const {
  MSSTYLE_REQUIRE(!pairs.empty(), "dtw path is empty");
  MSSTYLE_REQUIRE(pairs.front() == std::make_pair(0, 0), "dtw path must start at (0, 0)");
  MSSTYLE_REQUIRE(pairs.back() == std::make_pair(n_pred - 1, n_ref - 1),
                  "dtw path must end at the last frame pair");
  for (std::size_t k = 1; k < pairs.size(); ++k) {
    const int di = pairs[k].first - pairs[k - 1].first;
    const int dj = pairs[k].second - pairs[k - 1].second;
    MSSTYLE_REQUIRE((di == 0 || di == 1) && (dj == 0 || dj == 1) && di + dj > 0,
                    "dtw path step at position " + std::to_string(k) + " is not a unit step");
  }
}

DtwResult dtw_align(const Matrix& pred_mel, const Matrix& ref_mel) {
  MSSTYLE_REQUIRE(pred_mel.cols() == ref_mel.cols(), "dtw: mel widths differ");
  return dtw_align(static_cast<int>(pred_mel.rows()), static_cast<int>(ref_mel.rows()),
                   [&](int i, int j) { return (pred_mel.row(i) - ref_mel.row(j)).norm(); });
}

namespace {

std::optional<double> path_rmse(const Vector& pred, const Vector& ref, const DtwPath& path,
                                bool voiced_only) {
  double sum = 0.0;
  long n = 0;
  for (const auto& [i, j] : path.pairs) {
    MSSTYLE_REQUIRE(i >= 0 && i < pred.size() && j >= 0 && j < ref.size(),
                    "warped rmse: path index outside the sequences");
    if (voiced_only && (pred(i) <= 0.0 || ref(j) <= 0.0)) continue;
    const double d = pred(i) - ref(j);
    sum += d * d;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return std::sqrt(sum / static_cast<double>(n));
}

}  // namespace

std::optional<double> warped_rmse(const Vector& pred, const Vector& ref, const DtwPath& path) {
  return path_rmse(pred, ref, path, false);
}

std::optional<double> warped_f0_rmse(const Vector& pred_f0, const Vector& ref_f0, const DtwPath& path) {
  return path_rmse(pred_f0, ref_f0, path, true);
}

double duration_mse(std::span<const int> pred, std::span<const int> ref) {
  MSSTYLE_REQUIRE(pred.size() == ref.size(), "duration mse: " + std::to_string(pred.size()) +
                                                 " predicted vs " + std::to_string(ref.size()) +
                                                 " reference durations");
  MSSTYLE_REQUIRE(!pred.empty(), "duration mse: empty duration sequences");
  double sum = 0.0;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const double d = static_cast<double>(pred[k]) - static_cast<double>(ref[k]);
    sum += d * d;
  }
  return sum / static_cast<double>(pred.size());
}

EvalAggregate aggregate(const std::vector<UtteranceMetrics>& utterances) {
  EvalAggregate a;
  a.utterances = static_cast<int>(utterances.size());
  if (utterances.empty()) return a;
  double f0 = 0.0, energy = 0.0, duration = 0.0;
  for (const auto& u : utterances) {
    if (u.f0_rmse) {
      f0 += *u.f0_rmse;
      ++a.f0_utterances;
    }
    energy += u.energy_rmse;
    duration += u.duration_mse;
  }
  const double n = static_cast<double>(utterances.size());
  if (a.f0_utterances > 0) a.f0_rmse = f0 / a.f0_utterances;
  a.energy_rmse = energy / n;
  a.duration_mse = duration / n;
  return a;
}

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json EvalReport::to_json() const {
  json utts = json::array();
  for (const auto& u : utterances)
    utts.push_back({{"id", u.id},
                    {"f0_rmse", optional_json(u.f0_rmse)},
                    {"energy_rmse", u.energy_rmse},
                    {"duration_mse", u.duration_mse},
                    {"predicted_frames", u.predicted_frames},
                    {"reference_frames", u.reference_frames}});
  json fails = json::array();
  for (const auto& f : failures) fails.push_back({{"id", f.id}, {"error", f.error}});
  return {{"schema", kEvalReportSchema},
          {"version", kEvalReportVersion},
          {"mode", mode},
          {"complete", complete()},
          {"utterances", utts},
          {"failures", fails},
          {"aggregate",
           {{"f0_rmse", optional_json(aggregate.f0_rmse)},
            {"energy_rmse", optional_json(aggregate.energy_rmse)},
            {"duration_mse", optional_json(aggregate.duration_mse)},
            {"utterances", aggregate.utterances},
            {"f0_utterances", aggregate.f0_utterances}}}};
}

std::string EvalReport::table() const {
  std::size_t width = 9;
  for (const auto& u : utterances) width = std::max(width, u.id.size());
  const auto cell = [](const std::optional<double>& v) {
    char buf[32];
    if (v)
      std::snprintf(buf, sizeof buf, "%14.6f", *v);
    else
      std::snprintf(buf, sizeof buf, "%14s", "n/a");
    return std::string(buf);
  };
  std::ostringstream os;
  const auto row = [&](const std::string& id, const std::optional<double>& f0,
                       const std::optional<double>& energy, const std::optional<double>& dur) {
    os << id << std::string(width - id.size() + 2, ' ') << cell(f0) << cell(energy) << cell(dur)
       << '\n';
  };
  char head[96];
  std::snprintf(head, sizeof head, "%14s%14s%14s", "f0_rmse_hz", "energy_rmse", "dur_mse");
  os << "utterance" << std::string(width - 9 + 2, ' ') << head << '\n';
  for (const auto& u : utterances) row(u.id, u.f0_rmse, u.energy_rmse, u.duration_mse);
  row("mean", aggregate.f0_rmse, aggregate.energy_rmse, aggregate.duration_mse);
  for (const auto& f : failures) os << "FAILED " << f.id << ": " << f.error << '\n';
  return os.str();
}

namespace {

void check(bool ok, const std::string& what) {
  if (!ok) throw InvalidInputError("eval report: " + what);
}

void check_metric(const json& j, const std::string& key, bool nullable, const std::string& where) {
  check(j.contains(key), where + " lacks '" + key + "'");
  const json& v = j.at(key);
  if (nullable && v.is_null()) return;
  check(v.is_number(), where + "." + key + " must be a number");
  const double d = v.get<double>();
  check(std::isfinite(d) && d >= 0.0, where + "." + key + " must be finite and >= 0");
}

}  // namespace

void validate_report_json(const json& r) {
  check(r.is_object(), "not an object");
  check(r.value("schema", "") == kEvalReportSchema, "wrong schema tag");
  check(r.value("version", 0) == kEvalReportVersion, "unsupported version");
  check(r.contains("mode") && r.at("mode").is_string(), "missing mode");
  check(r.contains("complete") && r.at("complete").is_boolean(), "missing complete flag");
  check(r.contains("utterances") && r.at("utterances").is_array(), "missing utterances");
  check(r.contains("failures") && r.at("failures").is_array(), "missing failures");
  for (const auto& u : r.at("utterances")) {
    check(u.is_object() && u.contains("id") && u.at("id").is_string(), "utterance without id");
    const std::string where = "utterance " + u.at("id").get<std::string>();
    check_metric(u, "f0_rmse", true, where);
    check_metric(u, "energy_rmse", false, where);
    check_metric(u, "duration_mse", false, where);
    for (const char* k : {"predicted_frames", "reference_frames"})
      check(u.contains(k) && u.at(k).is_number_integer() && u.at(k).get<long>() > 0,
            where + " has a bad " + k);
  }
  for (const auto& f : r.at("failures"))
    check(f.is_object() && f.contains("id") && f.at("id").is_string() && f.contains("error") &&
              f.at("error").is_string(),
          "malformed failure entry");
  check(r.at("complete").get<bool>() == r.at("failures").empty(),
        "complete flag disagrees with the failure list");
  check(r.contains("aggregate") && r.at("aggregate").is_object(), "missing aggregate");
  const json& a = r.at("aggregate");
  for (const char* k : {"f0_rmse", "energy_rmse", "duration_mse"}) check_metric(a, k, true, "aggregate");
  check(a.contains("utterances") && a.at("utterances").is_number_integer() &&
            a.at("utterances").get<std::size_t>() == r.at("utterances").size(),
        "aggregate utterance count disagrees with the utterance list");
  check(a.contains("f0_utterances") && a.at("f0_utterances").is_number_integer(),
        "aggregate lacks f0_utterances");
}

namespace {

UtteranceMetrics evaluate_one(const MsStyleModel& model, const ContextWindow& window,
                              const SemanticEmbedder& embedder, const EvalOptions& options) {
  const Utterance& ref = window.current();
  ref.validate();
  UtteranceMetrics m;
  m.id = ref.id;
  Matrix mel;
  Vector f0, energy;
  std::vector<int> durations;
  if (options.mode == EvalMode::kGroundTruth) {
    mel = ref.mel.frames;
    f0 = ref.pitch;
    energy = ref.energy;
    durations = ref.alignment.phoneme_durations;
  } else {
    const SynthesisResult s = synthesize(model, window, embedder);
    mel = s.mel;
    f0 = options.f0_from_mel ? options.f0_from_mel(s.mel) : s.frame_pitch();
    energy = frame_energy(s.mel);
    durations = s.durations;
  }
  MSSTYLE_REQUIRE(f0.size() == mel.rows(), "eval: predicted F0 length differs from its mel");
  const DtwResult dtw = dtw_align(mel, ref.mel.frames);
  m.f0_rmse = warped_f0_rmse(f0, ref.pitch, dtw.path);
  m.energy_rmse = *warped_rmse(energy, ref.energy, dtw.path);
  m.duration_mse = duration_mse(durations, ref.alignment.phoneme_durations);
  m.predicted_frames = static_cast<int>(mel.rows());
  m.reference_frames = static_cast<int>(ref.mel.frames.rows());
  for (double v : {m.energy_rmse, m.duration_mse, m.f0_rmse.value_or(0.0)})
    if (!std::isfinite(v)) throw NumericError("eval: non-finite metric for " + m.id, "{}");
  return m;
}

}  // namespace

EvalReport evaluate_corpus(const MsStyleModel& model, const std::vector<Utterance>& split,
                           const SemanticEmbedder& embedder, const EvalOptions& options) {
  MSSTYLE_REQUIRE(!split.empty(), "evaluate: empty split");
  EvalReport report;
  report.mode = options.mode == EvalMode::kGroundTruth ? "ground-truth" : "predicted";
  const auto pad = make_padding_utterance(split.front().mel.config);
  for (std::size_t k = 0; k < split.size(); ++k) {
    try {
      const ContextWindow w =
          build_chapter_window(split, static_cast<int>(k), model.config.context_radius, pad);
      report.utterances.push_back(evaluate_one(model, w, embedder, options));
    } catch (const std::exception& e) {
      report.failures.push_back({split[k].id, e.what()});
    }
  }
  report.aggregate = aggregate(report.utterances);
  return report;
}

}  // namespace msstyle
