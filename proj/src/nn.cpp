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

#include "msstyle/nn.hpp"

#include <cmath>

#include "msstyle/errors.hpp"

namespace msstyle {

std::uint64_t fnv1a(std::string_view text, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Matrix Rng::normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev) {
  Matrix m(rows, cols);
  // Fill row-major so the stream order does not depend on storage order.
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal(0.0, stddev);
  return m;
}

Parameter& ParamStore::create(const std::string& name, Matrix init) {
  MSSTYLE_REQUIRE(!contains(name), "duplicate parameter name: " + name);
  Parameter& p = params_[name];
  p.name = name;
  p.value = std::move(init);
  p.zero_grad();
  return p;
}

Parameter& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

void ParamStore::set_trainable(std::string_view prefix, bool trainable) {
  for (auto& [name, p] : params_) {
    if (std::string_view(name).substr(0, prefix.size()) == prefix) p.trainable = trainable;
  }
}

void ParamStore::set_all_trainable(bool trainable) {
  for (auto& [name, p] : params_) p.trainable = trainable;
}

void ParamStore::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, p] : params_) out.push_back(name);
  return out;
}

std::vector<std::string> ParamStore::names_with_prefix(std::string_view prefix) const {
  std::vector<std::string> out;
  for (const auto& [name, p] : params_) {
    if (std::string_view(name).substr(0, prefix.size()) == prefix) out.push_back(name);
  }
  return out;
}

namespace nn {

Matrix xavier(Rng& rng, Eigen::Index fan_in, Eigen::Index fan_out) {
  return rng.normal_matrix(fan_in, fan_out,
                           std::sqrt(2.0 / static_cast<double>(fan_in + fan_out)));
}

Linear Linear::create(ParamStore& store, const std::string& name, Eigen::Index in,
                      Eigen::Index out, Rng& rng, bool with_bias) {
  Linear l;
  l.weight = &store.create(name + ".weight", xavier(rng, in, out));
  if (with_bias) l.bias = &store.create(name + ".bias", Matrix::Zero(1, out));
  return l;
}

Var Linear::operator()(Graph& g, const Var& x) const {
  Var y = ad::matmul(x, g.param(*weight));
  if (bias) y = ad::add_row(y, g.param(*bias));
  return y;
}

LayerNorm LayerNorm::create(ParamStore& store, const std::string& name, Eigen::Index width) {
  LayerNorm ln;
  ln.gain = &store.create(name + ".gain", Matrix::Ones(1, width));
  ln.offset = &store.create(name + ".offset", Matrix::Zero(1, width));
  return ln;
}

Var LayerNorm::operator()(Graph& g, const Var& x) const {
  return ad::layer_norm_rows(x, g.param(*gain), g.param(*offset));
}

Conv2d Conv2d::create(ParamStore& store, const std::string& name, Eigen::Index in_ch,
                      Eigen::Index out_ch, Rng& rng) {
  Conv2d c;
  c.in_channels = in_ch;
  c.kernel = Linear::create(store, name, 9 * in_ch, out_ch, rng);
  return c;
}

Var Conv2d::operator()(Graph& g, const Var& x, Eigen::Index height, Eigen::Index width) const {
  MSSTYLE_REQUIRE(x.rows() == height * width && x.cols() == in_channels,
                  "conv2d: input layout mismatch");
  const Eigen::Index out_h = out_extent(height);
  const Eigen::Index out_w = out_extent(width);
  std::vector<Var> taps;
  taps.reserve(9);
  std::vector<int> index(static_cast<std::size_t>(out_h * out_w));
  for (int dh = -1; dh <= 1; ++dh) {
    for (int dw = -1; dw <= 1; ++dw) {
      for (Eigen::Index ho = 0; ho < out_h; ++ho) {
        for (Eigen::Index wo = 0; wo < out_w; ++wo) {
          const Eigen::Index h = 2 * ho + dh;
          const Eigen::Index w = 2 * wo + dw;
          const bool inside = h >= 0 && h < height && w >= 0 && w < width;
          index[static_cast<std::size_t>(ho * out_w + wo)] =
              inside ? static_cast<int>(h * width + w) : -1;
        }
      }
      taps.push_back(ad::gather_rows(x, index));
    }
  }
  return kernel(g, ad::concat_cols(taps));
}

Conv1d Conv1d::create(ParamStore& store, const std::string& name, Eigen::Index in,
                      Eigen::Index out, int kernel_width, Rng& rng) {
  MSSTYLE_REQUIRE(kernel_width >= 1 && kernel_width % 2 == 1, "conv1d: kernel must be odd");
  Conv1d c;
  c.width = kernel_width;
  c.kernel = Linear::create(store, name, kernel_width * in, out, rng);
  return c;
}

Var Conv1d::operator()(Graph& g, const Var& x) const {
  if (width == 1) return kernel(g, x);
  const int half = width / 2;
  const auto length = static_cast<int>(x.rows());
  std::vector<Var> taps;
  taps.reserve(static_cast<std::size_t>(width));
  std::vector<int> index(static_cast<std::size_t>(length));
  for (int k = -half; k <= half; ++k) {
    for (int t = 0; t < length; ++t) {
      const int src = t + k;
      index[static_cast<std::size_t>(t)] = (src >= 0 && src < length) ? src : -1;
    }
    taps.push_back(ad::gather_rows(x, index));
  }
  return kernel(g, ad::concat_cols(taps));
}

Gru Gru::create(ParamStore& store, const std::string& name, Eigen::Index in,
                Eigen::Index hidden_size, Rng& rng) {
  Gru gru;
  gru.size = hidden_size;
  gru.input = Linear::create(store, name + ".input", in, 3 * hidden_size, rng);
  gru.hidden = Linear::create(store, name + ".hidden", hidden_size, 3 * hidden_size, rng);
  return gru;
}

Var Gru::operator()(Graph& g, const Var& x, bool reverse) const {
  const Eigen::Index steps = x.rows();
  MSSTYLE_REQUIRE(steps >= 1, "gru: empty sequence");
  const Eigen::Index h = size;
  Var projected = input(g, x);
  Var state = g.constant(Matrix::Zero(1, h));
  std::vector<Var> outputs(static_cast<std::size_t>(steps));
  for (Eigen::Index i = 0; i < steps; ++i) {
    const Eigen::Index t = reverse ? steps - 1 - i : i;
    Var gx = ad::slice_rows(projected, t, 1);
    Var gh = hidden(g, state);
    Var r = ad::sigmoid(ad::slice_cols(gx, 0, h) + ad::slice_cols(gh, 0, h));
    Var z = ad::sigmoid(ad::slice_cols(gx, h, h) + ad::slice_cols(gh, h, h));
    Var n = ad::tanh(ad::slice_cols(gx, 2 * h, h) + ad::cwise_mul(r, ad::slice_cols(gh, 2 * h, h)));
    state = n + ad::cwise_mul(z, state - n);
    outputs[static_cast<std::size_t>(t)] = state;
  }
  return ad::concat_rows(outputs);
}

BiGru BiGru::create(ParamStore& store, const std::string& name, Eigen::Index in,
                    Eigen::Index hidden_size, Rng& rng) {
  BiGru b;
  b.forward = Gru::create(store, name + ".fwd", in, hidden_size, rng);
  b.backward = Gru::create(store, name + ".bwd", in, hidden_size, rng);
  return b;
}

Var BiGru::operator()(Graph& g, const Var& x) const {
  return ad::concat_cols({forward(g, x, false), backward(g, x, true)});
}

MultiHeadSelfAttention MultiHeadSelfAttention::create(ParamStore& store, const std::string& name,
                                                      Eigen::Index width, int heads, Rng& rng) {
  MSSTYLE_REQUIRE(heads >= 1 && width % heads == 0, "attention: width not divisible by heads");
  MultiHeadSelfAttention a;
  a.heads = heads;
  a.query = Linear::create(store, name + ".query", width, width, rng);
  a.key = Linear::create(store, name + ".key", width, width, rng);
  a.value = Linear::create(store, name + ".value", width, width, rng);
  a.output = Linear::create(store, name + ".output", width, width, rng);
  return a;
}

Var MultiHeadSelfAttention::operator()(Graph& g, const Var& x) const {
  Var q = query(g, x);
  Var k = key(g, x);
  Var v = value(g, x);
  const Eigen::Index width = q.cols() / heads;
  const double temperature = 1.0 / std::sqrt(static_cast<double>(width));
  std::vector<Var> per_head;
  per_head.reserve(static_cast<std::size_t>(heads));
  for (int hd = 0; hd < heads; ++hd) {
    Var qh = ad::slice_cols(q, hd * width, width);
    Var kh = ad::slice_cols(k, hd * width, width);
    Var vh = ad::slice_cols(v, hd * width, width);
    Var weights = ad::softmax_rows(ad::scale(ad::matmul(qh, ad::transpose(kh)), temperature));
    per_head.push_back(ad::matmul(weights, vh));
  }
  return output(g, ad::concat_cols(per_head));
}

AttentionPool AttentionPool::create(ParamStore& store, const std::string& name, Eigen::Index in,
                                    Eigen::Index att, Eigen::Index out, Rng& rng) {
  AttentionPool p;
  p.query = &store.create(name + ".query", rng.normal_matrix(1, att, 1.0 / std::sqrt(att)));
  p.key = Linear::create(store, name + ".key", in, att, rng, false);
  p.value = Linear::create(store, name + ".value", in, out, rng, false);
  return p;
}

Var AttentionPool::operator()(Graph& g, const Var& x, Matrix* weights) const {
  Var keys = key(g, x);
  Var values = value(g, x);
  const double temperature = 1.0 / std::sqrt(static_cast<double>(keys.cols()));
  Var logits = ad::scale(ad::matmul(g.param(*query), ad::transpose(keys)), temperature);
  Var w = ad::softmax_rows(logits);
  if (weights) *weights = w.value();
  return ad::matmul(w, values);
}

Matrix sinusoid_positions(Eigen::Index length, Eigen::Index width) {
  Matrix table(length, width);
  for (Eigen::Index t = 0; t < length; ++t) {
    for (Eigen::Index i = 0; i < width; ++i) {
      const double rate =
          std::pow(10000.0, -2.0 * static_cast<double>(i / 2) / static_cast<double>(width));
      const double angle = static_cast<double>(t) * rate;
      table(t, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return table;
}

Var l1_loss(const Var& a, const Var& b) { return ad::mean(ad::abs(a - b)); }

Var mse_loss(const Var& a, const Var& b) { return ad::mean(ad::square(a - b)); }

}  // namespace nn
}  // namespace msstyle
