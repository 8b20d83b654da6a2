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

// Adam with bias correction, global-norm clipping and the inverse-square-root
// warm-up schedule.

#include <map>
#include <string>

#include "msstyle/nn.hpp"

namespace msstyle {

// scale * d_model^-0.5 * min(step^-0.5, step * warmup^-1.5), step >= 1.
double lr_at(long step, int d_model, int warmup, double scale = 1.0);

struct AdamState {
  std::map<std::string, Matrix> m;
  std::map<std::string, Matrix> v;
  long t = 0;
};

class Adam {
 public:
  Adam(double beta1, double beta2, double epsilon) : beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

  // Updates every trainable parameter from its accumulated gradient.
  void step(ParamStore& store, double lr);
  void reset() { state_ = {}; }

  AdamState& state() { return state_; }
  const AdamState& state() const { return state_; }

 private:
  double beta1_, beta2_, eps_;
  AdamState state_;
};

// Global L2 norm of trainable gradients before clipping. Gradients are
// scaled in place when the norm exceeds max_norm.
double clip_grad_norm(ParamStore& store, double max_norm);

}  // namespace msstyle
