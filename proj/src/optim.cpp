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

#include "msstyle/optim.hpp"

#include <algorithm>
#include <cmath>

#include "msstyle/errors.hpp"

namespace msstyle {

double lr_at(long step, int d_model, int warmup, double scale) {
  MSSTYLE_REQUIRE(step >= 1, "lr_at: step must be at least 1");
  MSSTYLE_REQUIRE(d_model >= 1 && warmup >= 1, "lr_at: invalid schedule");
  const double s = static_cast<double>(step);
  return scale / std::sqrt(static_cast<double>(d_model)) *
         std::min(1.0 / std::sqrt(s), s * std::pow(static_cast<double>(warmup), -1.5));
}

void Adam::step(ParamStore& store, double lr) {
  ++state_.t;
  const double t = static_cast<double>(state_.t);
  const double c1 = 1.0 - std::pow(beta1_, t);
  const double c2 = 1.0 - std::pow(beta2_, t);
  for (auto& [name, p] : store.items()) {
    if (!p.trainable) continue;
    auto [mit, fresh_m] = state_.m.try_emplace(name, Matrix::Zero(p.value.rows(), p.value.cols()));
    auto [vit, fresh_v] = state_.v.try_emplace(name, Matrix::Zero(p.value.rows(), p.value.cols()));
    Matrix& m = mit->second;
    Matrix& v = vit->second;
    m = beta1_ * m + (1.0 - beta1_) * p.grad;
    v = beta2_ * v + (1.0 - beta2_) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  }
}

double clip_grad_norm(ParamStore& store, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, p] : store.items())
    if (p.trainable) sq += p.grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double k = max_norm / (norm + 1e-12);
    for (auto& [name, p] : store.items())
      if (p.trainable) p.grad *= k;
  }
  return norm;
}

}  // namespace msstyle
