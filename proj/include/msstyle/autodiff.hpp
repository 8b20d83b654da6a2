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

// Minimal reverse-mode automatic differentiation over dense Eigen matrices.
//
// A Graph records every operation applied to Var handles. Every value is a
// 2-D matrix; sequences are stored row-per-timestep. Calling backward() on a
// 1x1 loss propagates gradients to every node that requires them and then
// accumulates the results into the bound Parameters.

#include <Eigen/Dense>

#include <deque>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace msstyle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

// A named trainable array. Owned by a ParamStore; graphs reference it.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;  // same shape as value once zero_grad() ran
  bool trainable = true;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

namespace ad {

struct Node {
  Matrix value;
  Matrix grad;  // empty until a gradient reaches the node
  bool requires_grad = false;
  std::function<void(const Matrix&)> backward;
};

class Graph;

class Var {
 public:
  Var() = default;
  Var(Graph* graph, Node* node) : graph_(graph), node_(node) {}

  const Matrix& value() const { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool valid() const { return node_ != nullptr; }

  Graph* graph() const { return graph_; }
  Node* node() const { return node_; }

 private:
  Graph* graph_ = nullptr;
  Node* node_ = nullptr;
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Matrix value);
  // A leaf whose gradient can be read back after backward().
  Var variable(Matrix value);
  // Binds a parameter. Repeated calls within one graph return the same node.
  // Frozen parameters (trainable == false) enter as constants.
  Var param(Parameter& p);

  // Seeds d(loss)/d(loss) = 1 and runs the tape backwards. Gradients of
  // bound trainable parameters are added into Parameter::grad.
  void backward(const Var& loss);

  // Creates an op node. `fn` receives the output gradient; it is only stored
  // when at least one input requires a gradient.
  Var make(Matrix value, std::initializer_list<Var> inputs,
           std::function<void(const Matrix&)> fn);
  Var make(Matrix value, std::span<const Var> inputs,
           std::function<void(const Matrix&)> fn);

  std::size_t size() const { return nodes_.size(); }

 private:
  std::deque<Node> nodes_;
  std::unordered_map<Parameter*, Node*> bound_;
  std::vector<std::pair<Node*, Parameter*>> bindings_;
};

// Adds `g` into the gradient slot of `n` when it participates in backprop.
void accumulate(Node* n, const Matrix& g);

Var matmul(const Var& a, const Var& b);
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var cwise_mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
inline Var operator*(double s, const Var& a) { return scale(a, s); }
// Adds a 1xC row to every row of a.
Var add_row(const Var& a, const Var& row);
Var transpose(const Var& a);

Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var relu(const Var& a);
Var square(const Var& a);
Var abs(const Var& a);

// Row-wise softmax.
Var softmax_rows(const Var& a);
// Row-wise layer normalisation with learned gain/offset (both 1xC).
Var layer_norm_rows(const Var& a, const Var& gain, const Var& offset,
                    double eps = 1e-5);

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
inline Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}
inline Var concat_rows(std::initializer_list<Var> parts) {
  return concat_rows(std::span<const Var>(parts.begin(), parts.size()));
}
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
// out.row(r) = a.row(index[r]); a negative index yields a zero row.
Var gather_rows(const Var& a, std::span<const int> index);
// (H*W) x C  ->  H x (W*C): row h holds positions h*W .. h*W+W-1 side by side.
Var fold_rows(const Var& a, Eigen::Index group);

Var sum(const Var& a);
Var mean(const Var& a);

}  // namespace ad
}  // namespace msstyle
