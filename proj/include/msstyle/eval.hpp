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

// Objective evaluation: DTW between predicted and reference mels, then F0
// and energy RMSE along the path, plus duration MSE.

#include <algorithm>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "msstyle/errors.hpp"
#include "msstyle/model.hpp"

namespace msstyle {

struct DtwPath {
  std::vector<std::pair<int, int>> pairs;  // (predicted frame, reference frame)

  // Throws ContractError unless the path runs monotonically from (0, 0) to
  // (n_pred - 1, n_ref - 1) in unit steps.
  void validate(int n_pred, int n_ref) const;
};

struct DtwResult {
  DtwPath path;
  double cost = 0.0;  // sum of local costs along the path, accumulated from (0, 0)
};

// Minimal-cost alignment of n_pred x n_ref frames under `dist(i, j)`.
// Ties prefer the diagonal step, then a reference-only step.
template <class Distance>
DtwResult dtw_align(int n_pred, int n_ref, Distance&& dist) {
  MSSTYLE_REQUIRE(n_pred > 0 && n_ref > 0, "dtw: both sequences must be non-empty");
  const double inf = std::numeric_limits<double>::infinity();
  Matrix acc = Matrix::Constant(n_pred, n_ref, inf);
  // 0 = diagonal, 1 = from (i, j-1), 2 = from (i-1, j)
  Eigen::Matrix<unsigned char, Eigen::Dynamic, Eigen::Dynamic> from(n_pred, n_ref);
  for (int i = 0; i < n_pred; ++i) {
    for (int j = 0; j < n_ref; ++j) {
      const double c = dist(i, j);
      if (i == 0 && j == 0) {
        acc(0, 0) = c;
        from(0, 0) = 0;
        continue;
      }
      double best = inf;
      unsigned char arg = 0;
      if (i > 0 && j > 0) best = acc(i - 1, j - 1);
      if (j > 0 && acc(i, j - 1) < best) best = acc(i, j - 1), arg = 1;
      if (i > 0 && acc(i - 1, j) < best) best = acc(i - 1, j), arg = 2;
      acc(i, j) = best + c;
      from(i, j) = arg;
    }
  }
  DtwResult r;
  r.cost = acc(n_pred - 1, n_ref - 1);
  int i = n_pred - 1, j = n_ref - 1;
  r.path.pairs.emplace_back(i, j);
  while (i > 0 || j > 0) {
    switch (from(i, j)) {
      case 0: --i, --j; break;
      case 1: --j; break;
      default: --i; break;
    }
    r.path.pairs.emplace_back(i, j);
  }
  std::reverse(r.path.pairs.begin(), r.path.pairs.end());
  return r;
}

// Euclidean distance between mel frames (rows).
DtwResult dtw_align(const Matrix& pred_mel, const Matrix& ref_mel);

// sqrt(mean over path pairs of (pred[i] - ref[j])^2); nullopt when the path
// is empty.
std::optional<double> warped_rmse(const Vector& pred, const Vector& ref, const DtwPath& path);
// Same, over the pairs where both frames are voiced (> 0). nullopt when no
// such pair exists.
std::optional<double> warped_f0_rmse(const Vector& pred_f0, const Vector& ref_f0, const DtwPath& path);

double duration_mse(std::span<const int> pred, std::span<const int> ref);

struct UtteranceMetrics {
  std::string id;
  std::optional<double> f0_rmse;
  double energy_rmse = 0.0;
  double duration_mse = 0.0;
  int predicted_frames = 0;
  int reference_frames = 0;
};

struct EvalFailure {
  std::string id;
  std::string error;
};

struct EvalAggregate {
  std::optional<double> f0_rmse;  // mean over utterances with a defined F0 RMSE
  std::optional<double> energy_rmse;
  std::optional<double> duration_mse;
  int utterances = 0;
  int f0_utterances = 0;
};

struct EvalReport {
  std::string mode;
  std::vector<UtteranceMetrics> utterances;
  std::vector<EvalFailure> failures;
  EvalAggregate aggregate;

  bool complete() const { return failures.empty(); }
  nlohmann::json to_json() const;
  // Aligned plain-text table with one row per utterance plus the means.
  std::string table() const;
};

inline constexpr const char* kEvalReportSchema = "msstyle.eval-report";
inline constexpr int kEvalReportVersion = 1;

// Throws InvalidInputError describing the first deviation from the report
// schema.
void validate_report_json(const nlohmann::json& report);

EvalAggregate aggregate(const std::vector<UtteranceMetrics>& utterances);

enum class EvalMode {
  kPredicted,    // predictor-conditioned synthesis against the reference
  kGroundTruth,  // reference features against themselves
};

struct EvalOptions {
  EvalMode mode = EvalMode::kPredicted;
  // F0 of a synthesized mel (e.g. vocoder + pitch tracker). When empty, the
  // model's per-phoneme pitch expanded by its durations is used.
  std::function<Vector(const Matrix& mel)> f0_from_mel;
};

// Evaluates every utterance of `split` (windows are built inside the
// split). Per-utterance exceptions are recorded as failures.
EvalReport evaluate_corpus(const MsStyleModel& model, const std::vector<Utterance>& split,
                           const SemanticEmbedder& embedder, const EvalOptions& options = {});

}  // namespace msstyle
