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

// Parameter storage and the small set of layers shared by every model.

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "msstyle/autodiff.hpp"

namespace msstyle {

// 64-bit FNV-1a; stable across runs and platforms.
std::uint64_t fnv1a(std::string_view text, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t mix64(std::uint64_t x);

// Seeded generator. Components fork named children so that adding a
// component never shifts another component's stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}
  Rng fork(std::string_view label) const { return Rng(mix64(fnv1a(label, seed_))); }

  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
  Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev);

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

// Owns every named parameter. Addresses stay valid for the store's lifetime.
class ParamStore {
 public:
  Parameter& create(const std::string& name, Matrix init);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  // Sets `trainable` on every parameter whose name starts with `prefix`.
  void set_trainable(std::string_view prefix, bool trainable);
  void set_all_trainable(bool trainable);
  void zero_grad();

  std::vector<std::string> names() const;
  std::vector<std::string> names_with_prefix(std::string_view prefix) const;
  std::map<std::string, Parameter>& items() { return params_; }
  const std::map<std::string, Parameter>& items() const { return params_; }

 private:
  std::map<std::string, Parameter> params_;
};

namespace nn {

using ad::Graph;
using ad::Var;

// Xavier-normal initialised weight.
Matrix xavier(Rng& rng, Eigen::Index fan_in, Eigen::Index fan_out);

struct Linear {
  Parameter* weight = nullptr;  // in x out
  Parameter* bias = nullptr;    // 1 x out, may be absent

  static Linear create(ParamStore& store, const std::string& name, Eigen::Index in,
                       Eigen::Index out, Rng& rng, bool with_bias = true);
  Var operator()(Graph& g, const Var& x) const;
  Eigen::Index in() const { return weight->value.rows(); }
  Eigen::Index out() const { return weight->value.cols(); }
};

struct LayerNorm {
  Parameter* gain = nullptr;
  Parameter* offset = nullptr;

  static LayerNorm create(ParamStore& store, const std::string& name, Eigen::Index width);
  Var operator()(Graph& g, const Var& x) const;
};

// 3x3 convolution, stride 2, padding 1, over a feature map laid out as
// (H*W) x C with row index h*W + w.
struct Conv2d {
  Linear kernel;  // (9*C_in) x C_out
  Eigen::Index in_channels = 0;

  static Conv2d create(ParamStore& store, const std::string& name, Eigen::Index in_ch,
                       Eigen::Index out_ch, Rng& rng);
  static Eigen::Index out_extent(Eigen::Index extent) { return (extent + 1) / 2; }
  Var operator()(Graph& g, const Var& x, Eigen::Index height, Eigen::Index width) const;
};

// Same-padded 1-D convolution over time (rows).
struct Conv1d {
  Linear kernel;  // (k*C_in) x C_out
  int width = 1;

  static Conv1d create(ParamStore& store, const std::string& name, Eigen::Index in,
                       Eigen::Index out, int kernel_width, Rng& rng);
  Var operator()(Graph& g, const Var& x) const;
};

// Single-layer GRU with PyTorch gate conventions.
struct Gru {
  Linear input;   // in x 3H (gates r, z, n)
  Linear hidden;  // H x 3H
  Eigen::Index size = 0;

  static Gru create(ParamStore& store, const std::string& name, Eigen::Index in,
                    Eigen::Index hidden, Rng& rng);
  // Returns T x H states; `reverse` runs right-to-left but keeps row order.
  Var operator()(Graph& g, const Var& x, bool reverse = false) const;
};

struct BiGru {
  Gru forward;
  Gru backward;

  static BiGru create(ParamStore& store, const std::string& name, Eigen::Index in,
                      Eigen::Index hidden, Rng& rng);
  // T x 2H, forward states first.
  Var operator()(Graph& g, const Var& x) const;
};

struct MultiHeadSelfAttention {
  Linear query, key, value, output;
  int heads = 1;

  static MultiHeadSelfAttention create(ParamStore& store, const std::string& name,
                                       Eigen::Index width, int heads, Rng& rng);
  Var operator()(Graph& g, const Var& x) const;
};

// Scaled dot-product attention of a single learned query over a sequence,
// aggregating T x D to 1 x D_value. Weights are exposed for inspection.
struct AttentionPool {
  Parameter* query = nullptr;  // 1 x D_att
  Linear key;                  // D_in x D_att
  Linear value;                // D_in x D_value

  static AttentionPool create(ParamStore& store, const std::string& name, Eigen::Index in,
                              Eigen::Index att, Eigen::Index out, Rng& rng);
  Var operator()(Graph& g, const Var& x, Matrix* weights = nullptr) const;
};

// Sinusoidal position table, T x D.
Matrix sinusoid_positions(Eigen::Index length, Eigen::Index width);

// Mean of |a - b| over every element.
Var l1_loss(const Var& a, const Var& b);
// Mean of (a - b)^2 over every element.
Var mse_loss(const Var& a, const Var& b);

}  // namespace nn
}  // namespace msstyle
