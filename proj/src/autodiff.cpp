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

#include "msstyle/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "msstyle/errors.hpp"

namespace msstyle::ad {

void accumulate(Node* n, const Matrix& g) {
  if (!n->requires_grad) return;
  if (n->grad.size() == 0) {
    n->grad = g;
  } else {
    n->grad += g;
  }
}

Var Graph::constant(Matrix value) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  return Var(this, &n);
}

Var Graph::variable(Matrix value) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.requires_grad = true;
  return Var(this, &n);
}

Var Graph::param(Parameter& p) {
  if (auto it = bound_.find(&p); it != bound_.end()) return Var(this, it->second);
  Node& n = nodes_.emplace_back();
  n.value = p.value;
  n.requires_grad = p.trainable;
  bound_.emplace(&p, &n);
  if (p.trainable) bindings_.emplace_back(&n, &p);
  return Var(this, &n);
}

Var Graph::make(Matrix value, std::initializer_list<Var> inputs,
                std::function<void(const Matrix&)> fn) {
  return make(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
              std::move(fn));
}

Var Graph::make(Matrix value, std::span<const Var> inputs,
                std::function<void(const Matrix&)> fn) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  for (const Var& v : inputs) {
    if (v.requires_grad()) {
      n.requires_grad = true;
      break;
    }
  }
  if (n.requires_grad) n.backward = std::move(fn);
  return Var(this, &n);
}

void Graph::backward(const Var& loss) {
  MSSTYLE_REQUIRE(loss.graph() == this, "backward: loss belongs to another graph");
  MSSTYLE_REQUIRE(loss.rows() == 1 && loss.cols() == 1, "backward: loss must be 1x1");
  if (!loss.requires_grad()) return;
  loss.node()->grad = Matrix::Ones(1, 1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->backward && it->grad.size() != 0) it->backward(it->grad);
  }
  for (auto& [node, p] : bindings_) {
    if (node->grad.size() == 0) continue;
    if (p->grad.size() == 0) p->zero_grad();
    p->grad += node->grad;
  }
}

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ContractError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) +
                        "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                        "x" + std::to_string(b.cols()));
  }
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  MSSTYLE_REQUIRE(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Node* na = a.node();
  Node* nb = b.node();
  Matrix out = na->value * nb->value;
  return a.graph()->make(std::move(out), {a, b}, [na, nb](const Matrix& g) {
    if (na->requires_grad) accumulate(na, g * nb->value.transpose());
    if (nb->requires_grad) accumulate(nb, na->value.transpose() * g);
  });
}

Var operator+(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Node* na = a.node();
  Node* nb = b.node();
  return a.graph()->make(na->value + nb->value, {a, b}, [na, nb](const Matrix& g) {
    accumulate(na, g);
    accumulate(nb, g);
  });
}

Var operator-(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Node* na = a.node();
  Node* nb = b.node();
  return a.graph()->make(na->value - nb->value, {a, b}, [na, nb](const Matrix& g) {
    accumulate(na, g);
    if (nb->requires_grad) accumulate(nb, -g);
  });
}

Var cwise_mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "cwise_mul");
  Node* na = a.node();
  Node* nb = b.node();
  return a.graph()->make(na->value.cwiseProduct(nb->value), {a, b},
                         [na, nb](const Matrix& g) {
                           if (na->requires_grad) accumulate(na, g.cwiseProduct(nb->value));
                           if (nb->requires_grad) accumulate(nb, g.cwiseProduct(na->value));
                         });
}

Var scale(const Var& a, double s) {
  Node* na = a.node();
  return a.graph()->make(na->value * s, {a}, [na, s](const Matrix& g) { accumulate(na, g * s); });
}

Var add_row(const Var& a, const Var& row) {
  MSSTYLE_REQUIRE(row.rows() == 1 && row.cols() == a.cols(), "add_row: expects a 1xC row");
  Node* na = a.node();
  Node* nr = row.node();
  Matrix out = na->value.rowwise() + nr->value.row(0);
  return a.graph()->make(std::move(out), {a, row}, [na, nr](const Matrix& g) {
    accumulate(na, g);
    if (nr->requires_grad) accumulate(nr, g.colwise().sum());
  });
}

Var transpose(const Var& a) {
  Node* na = a.node();
  return a.graph()->make(na->value.transpose(), {a},
                         [na](const Matrix& g) { accumulate(na, g.transpose()); });
}

Var tanh(const Var& a) {
  Node* na = a.node();
  Matrix out = na->value.array().tanh().matrix();
  auto* graph = a.graph();
  Var result = graph->make(std::move(out), {a}, nullptr);
  Node* no = result.node();
  if (no->requires_grad) {
    no->backward = [na, no](const Matrix& g) {
      accumulate(na, (g.array() * (1.0 - no->value.array().square())).matrix());
    };
  }
  return result;
}

Var sigmoid(const Var& a) {
  Node* na = a.node();
  Matrix out = (1.0 / (1.0 + (-na->value.array()).exp())).matrix();
  Var result = a.graph()->make(std::move(out), {a}, nullptr);
  Node* no = result.node();
  if (no->requires_grad) {
    no->backward = [na, no](const Matrix& g) {
      accumulate(na, (g.array() * no->value.array() * (1.0 - no->value.array())).matrix());
    };
  }
  return result;
}

Var relu(const Var& a) {
  Node* na = a.node();
  Matrix out = na->value.cwiseMax(0.0);
  return a.graph()->make(std::move(out), {a}, [na](const Matrix& g) {
    accumulate(na, (na->value.array() > 0.0).select(g, 0.0).matrix());
  });
}

Var square(const Var& a) {
  Node* na = a.node();
  return a.graph()->make(na->value.array().square().matrix(), {a}, [na](const Matrix& g) {
    accumulate(na, (2.0 * g.array() * na->value.array()).matrix());
  });
}

Var abs(const Var& a) {
  Node* na = a.node();
  return a.graph()->make(na->value.cwiseAbs(), {a}, [na](const Matrix& g) {
    accumulate(na, (g.array() * na->value.array().sign()).matrix());
  });
}

Var softmax_rows(const Var& a) {
  Node* na = a.node();
  Matrix out(na->value.rows(), na->value.cols());
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double peak = na->value.row(r).maxCoeff();
    out.row(r) = (na->value.row(r).array() - peak).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  Var result = a.graph()->make(std::move(out), {a}, nullptr);
  Node* no = result.node();
  if (no->requires_grad) {
    no->backward = [na, no](const Matrix& g) {
      const Matrix& y = no->value;
      Vector dots = g.cwiseProduct(y).rowwise().sum();
      Matrix dx = y.array() * (g.colwise() - dots).array();
      accumulate(na, dx);
    };
  }
  return result;
}

Var layer_norm_rows(const Var& a, const Var& gain, const Var& offset, double eps) {
  MSSTYLE_REQUIRE(gain.rows() == 1 && gain.cols() == a.cols(), "layer_norm: gain must be 1xC");
  MSSTYLE_REQUIRE(offset.rows() == 1 && offset.cols() == a.cols(),
                  "layer_norm: offset must be 1xC");
  Node* na = a.node();
  Node* ng = gain.node();
  Node* nb = offset.node();
  const Eigen::Index n = na->value.rows();
  const double width = static_cast<double>(na->value.cols());
  Matrix normed(n, na->value.cols());
  Vector inv_std(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mu = na->value.row(r).mean();
    const double var = (na->value.row(r).array() - mu).square().sum() / width;
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    normed.row(r) = (na->value.row(r).array() - mu) * inv_std(r);
  }
  Matrix out = (normed.array().rowwise() * ng->value.row(0).array()).matrix();
  out.rowwise() += nb->value.row(0);
  return a.graph()->make(
      std::move(out), {a, gain, offset},
      [na, ng, nb, normed = std::move(normed), inv_std = std::move(inv_std),
       width](const Matrix& g) {
        if (ng->requires_grad) accumulate(ng, g.cwiseProduct(normed).colwise().sum());
        if (nb->requires_grad) accumulate(nb, g.colwise().sum());
        if (!na->requires_grad) return;
        Matrix gn = (g.array().rowwise() * ng->value.row(0).array()).matrix();
        Matrix dx(gn.rows(), gn.cols());
        for (Eigen::Index r = 0; r < gn.rows(); ++r) {
          const double mean_g = gn.row(r).mean();
          const double mean_gx = gn.row(r).cwiseProduct(normed.row(r)).sum() / width;
          dx.row(r) = inv_std(r) *
                      (gn.row(r).array() - mean_g - normed.row(r).array() * mean_gx);
        }
        accumulate(na, dx);
      });
}

Var concat_cols(std::span<const Var> parts) {
  MSSTYLE_REQUIRE(!parts.empty(), "concat_cols: no inputs");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    MSSTYLE_REQUIRE(p.rows() == rows, "concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<Node*> nodes;
  std::vector<Eigen::Index> offsets;
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    nodes.push_back(p.node());
    offsets.push_back(at);
    at += p.cols();
  }
  return parts[0].graph()->make(std::move(out), parts, [nodes, offsets](const Matrix& g) {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i]->requires_grad)
        accumulate(nodes[i], g.middleCols(offsets[i], nodes[i]->value.cols()));
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  MSSTYLE_REQUIRE(!parts.empty(), "concat_rows: no inputs");
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    MSSTYLE_REQUIRE(p.cols() == cols, "concat_rows: column counts differ");
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<Node*> nodes;
  std::vector<Eigen::Index> offsets;
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    nodes.push_back(p.node());
    offsets.push_back(at);
    at += p.rows();
  }
  return parts[0].graph()->make(std::move(out), parts, [nodes, offsets](const Matrix& g) {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i]->requires_grad)
        accumulate(nodes[i], g.middleRows(offsets[i], nodes[i]->value.rows()));
    }
  });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
  MSSTYLE_REQUIRE(start >= 0 && count >= 0 && start + count <= a.rows(),
                  "slice_rows: range out of bounds");
  Node* na = a.node();
  return a.graph()->make(na->value.middleRows(start, count), {a},
                         [na, start, count](const Matrix& g) {
                           Matrix full = Matrix::Zero(na->value.rows(), na->value.cols());
                           full.middleRows(start, count) = g;
                           accumulate(na, full);
                         });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  MSSTYLE_REQUIRE(start >= 0 && count >= 0 && start + count <= a.cols(),
                  "slice_cols: range out of bounds");
  Node* na = a.node();
  return a.graph()->make(na->value.middleCols(start, count), {a},
                         [na, start, count](const Matrix& g) {
                           Matrix full = Matrix::Zero(na->value.rows(), na->value.cols());
                           full.middleCols(start, count) = g;
                           accumulate(na, full);
                         });
}

Var gather_rows(const Var& a, std::span<const int> index) {
  Node* na = a.node();
  Matrix out(static_cast<Eigen::Index>(index.size()), na->value.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    const int src = index[r];
    MSSTYLE_REQUIRE(src < na->value.rows(), "gather_rows: index out of range");
    if (src < 0) {
      out.row(static_cast<Eigen::Index>(r)).setZero();
    } else {
      out.row(static_cast<Eigen::Index>(r)) = na->value.row(src);
    }
  }
  std::vector<int> idx(index.begin(), index.end());
  return a.graph()->make(std::move(out), {a}, [na, idx = std::move(idx)](const Matrix& g) {
    Matrix full = Matrix::Zero(na->value.rows(), na->value.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (idx[r] >= 0) full.row(idx[r]) += g.row(static_cast<Eigen::Index>(r));
    }
    accumulate(na, full);
  });
}

Var fold_rows(const Var& a, Eigen::Index group) {
  MSSTYLE_REQUIRE(group > 0 && a.rows() % group == 0, "fold_rows: rows not divisible by group");
  Node* na = a.node();
  const Eigen::Index channels = na->value.cols();
  const Eigen::Index out_rows = na->value.rows() / group;
  Matrix out(out_rows, group * channels);
  for (Eigen::Index h = 0; h < out_rows; ++h) {
    for (Eigen::Index w = 0; w < group; ++w) {
      out.row(h).segment(w * channels, channels) = na->value.row(h * group + w);
    }
  }
  return a.graph()->make(std::move(out), {a}, [na, group, channels](const Matrix& g) {
    Matrix dx(na->value.rows(), channels);
    for (Eigen::Index h = 0; h < g.rows(); ++h) {
      for (Eigen::Index w = 0; w < group; ++w) {
        dx.row(h * group + w) = g.row(h).segment(w * channels, channels);
      }
    }
    accumulate(na, dx);
  });
}

Var sum(const Var& a) {
  Node* na = a.node();
  Matrix out(1, 1);
  out(0, 0) = na->value.sum();
  return a.graph()->make(std::move(out), {a}, [na](const Matrix& g) {
    accumulate(na, Matrix::Constant(na->value.rows(), na->value.cols(), g(0, 0)));
  });
}

Var mean(const Var& a) {
  MSSTYLE_REQUIRE(a.rows() * a.cols() > 0, "mean: empty input");
  Node* na = a.node();
  const double n = static_cast<double>(na->value.size());
  Matrix out(1, 1);
  out(0, 0) = na->value.sum() / n;
  return a.graph()->make(std::move(out), {a}, [na, n](const Matrix& g) {
    accumulate(na, Matrix::Constant(na->value.rows(), na->value.cols(), g(0, 0) / n));
  });
}

}  // namespace msstyle::ad
