// Copyright 2026 The AdaDFQ Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "adadfq/tensor.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "adadfq/errors.h"

namespace adadfq {

namespace internal {

struct Node {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // empty when absent
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn backward;

  bool is_leaf() const { return !backward; }
};

}  // namespace internal

namespace {

thread_local bool g_grad_enabled = true;

using internal::Node;

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) {
    throw ContractError(std::string(op) + ": undefined tensor");
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

void require_rank2(const Tensor& a, const char* op) {
  require_defined(a, op);
  if (a.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " +
                         shape_string(a.shape()));
  }
}

void require_rowwise(const Tensor& a, const Tensor& v, const char* op) {
  require_rank2(a, op);
  require_defined(v, op);
  if (v.rank() != 1 || v.numel() != a.cols()) {
    throw DimensionError(std::string(op) + ": cannot broadcast " +
                         shape_string(v.shape()) + " over rows of " +
                         shape_string(a.shape()));
  }
}

void require_finite(std::span<const double> values, const char* op) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(op) + ": non-finite input");
    }
  }
}

// Elementwise unary op whose derivative is a function of (input, output).
template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
  require_defined(a, "unary");
  std::vector<double> out(a.numel());
  auto in = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  auto saved_in = a.node();
  auto result = make_result(a.shape(), std::move(out), {a}, nullptr);
  if (!result.requires_grad()) return result;
  std::weak_ptr<Node> self = result.node();
  result.node()->backward = [saved_in, self, deriv](
                                std::span<const double> g,
                                std::span<std::vector<double>*> pg) {
    auto out_node = self.lock();
    for (std::size_t i = 0; i < g.size(); ++i) {
      (*pg[0])[i] += g[i] * deriv(saved_in->data[i], out_node->data[i]);
    }
  };
  return result;
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

// ---- Tensor ----------------------------------------------------------------

Tensor::Tensor() = default;

Tensor::Tensor(std::shared_ptr<internal::Node> node) : node_(std::move(node)) {}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  for (std::size_t extent : shape) {
    if (extent == 0) {
      throw DimensionError("tensor extents must be positive, got " +
                           shape_string(shape));
    }
  }
  if (shape.size() > 2) {
    throw DimensionError("tensors are limited to rank 2, got " +
                         shape_string(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("shape " + shape_string(shape) + " needs " +
                         std::to_string(shape_numel(shape)) +
                         " values, got " + std::to_string(data.size()));
  }
  node_ = std::make_shared<Node>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
  require_defined(*this, "shape");
  return node_->shape;
}

std::size_t Tensor::numel() const { return node_ ? node_->data.size() : 0; }

std::size_t Tensor::rows() const {
  const Shape& s = shape();
  return s.empty() ? 1 : s[0];
}

std::size_t Tensor::cols() const {
  const Shape& s = shape();
  return s.size() < 2 ? 1 : s[1];
}

std::span<const double> Tensor::data() const {
  require_defined(*this, "data");
  return node_->data;
}

std::span<double> Tensor::mutable_data() {
  require_defined(*this, "mutable_data");
  return node_->data;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw DimensionError("item() needs a single element, got " +
                         shape_string(shape()));
  }
  return node_->data[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  return node_->data[row * cols() + col];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool requires_grad) {
  require_defined(*this, "set_requires_grad");
  if (!node_->is_leaf()) {
    throw ContractError("set_requires_grad is only valid on leaf tensors");
  }
  node_->requires_grad = requires_grad;
  return *this;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw ContractError("tensor has no gradient");
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

Tensor Tensor::detach() const {
  require_defined(*this, "detach");
  return Tensor(node_->shape, node_->data, false);
}

void Tensor::backward() const {
  require_defined(*this, "backward");
  if (numel() != 1) {
    throw ContractError("backward() needs a scalar root, got " +
                        shape_string(shape()));
  }
  if (!node_->requires_grad) {
    throw ContractError("backward() root is not connected to any parameter");
  }

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* node : order) {
    if (node->is_leaf()) {
      if (node->grad.empty()) node->grad.assign(node->data.size(), 0.0);
    } else {
      node->grad.assign(node->data.size(), 0.0);
    }
  }
  node_->grad[0] += 1.0;

  std::vector<std::vector<double>*> sinks;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->is_leaf()) continue;
    sinks.clear();
    for (const auto& parent : node->parents) {
      sinks.push_back(parent->requires_grad ? &parent->grad : nullptr);
    }
    node->backward(node->grad, sinks);
  }
}

Tensor make_result(Shape shape, std::vector<double> data,
                   std::vector<Tensor> parents, BackwardFn backward) {
  Tensor out(std::move(shape), std::move(data), false);
  bool needs = g_grad_enabled &&
               std::any_of(parents.begin(), parents.end(),
                           [](const Tensor& p) { return p.requires_grad(); });
  if (!needs) return out;
  out.node_->requires_grad = true;
  for (const Tensor& p : parents) out.node_->parents.push_back(p.node());
  // Ops that need a handle on their own output install the closure later;
  // a no-op placeholder marks the node as interior.
  out.node_->backward =
      backward ? std::move(backward)
               : BackwardFn([](std::span<const double>,
                               std::span<std::vector<double>*>) {});
  return out;
}

// ---- Ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner extents differ " +
                         shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ad[i * k + p];
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * bd[p * n + j];
    }
  }
  auto an = a.node();
  auto bn = b.node();
  return make_result(
      {m, n}, std::move(out), {a, b},
      [an, bn, m, k, n](std::span<const double> g,
                        std::span<std::vector<double>*> pg) {
        if (pg[0]) {  // dA = G * B^T
          auto& ga = *pg[0];
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              double acc = 0.0;
              for (std::size_t j = 0; j < n; ++j)
                acc += g[i * n + j] * bn->data[p * n + j];
              ga[i * k + p] += acc;
            }
        }
        if (pg[1]) {  // dB = A^T * G
          auto& gb = *pg[1];
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const double av = an->data[i * k + p];
              if (av == 0.0) continue;
              for (std::size_t j = 0; j < n; ++j)
                gb[p * n + j] += av * g[i * n + j];
            }
        }
      });
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  auto d = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = d[i * n + j];
  return make_result({n, m}, std::move(out), {a},
                     [m, n](std::span<const double> g,
                            std::span<std::vector<double>*> pg) {
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t j = 0; j < n; ++j)
                           (*pg[0])[i * n + j] += g[j * m + i];
                     });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  return make_result(a.shape(), std::move(out), {a, b},
                     [](std::span<const double> g,
                        std::span<std::vector<double>*> pg) {
                       for (auto* sink : pg) {
                         if (!sink) continue;
                         for (std::size_t i = 0; i < g.size(); ++i)
                           (*sink)[i] += g[i];
                       }
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
  return make_result(a.shape(), std::move(out), {a, b},
                     [](std::span<const double> g,
                        std::span<std::vector<double>*> pg) {
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         if (pg[0]) (*pg[0])[i] += g[i];
                         if (pg[1]) (*pg[1])[i] -= g[i];
                       }
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  auto an = a.node();
  auto bn = b.node();
  return make_result(a.shape(), std::move(out), {a, b},
                     [an, bn](std::span<const double> g,
                              std::span<std::vector<double>*> pg) {
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         if (pg[0]) (*pg[0])[i] += g[i] * bn->data[i];
                         if (pg[1]) (*pg[1])[i] += g[i] * an->data[i];
                       }
                     });
}

Tensor add_scalar(const Tensor& a, double c) {
  return unary(
      a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double c) {
  return unary(
      a, [c](double x) { return x * c; }, [c](double, double) { return c; });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

namespace {

enum class RowOp { kAdd, kSub, kMul, kDiv };

Tensor rowwise(const Tensor& a, const Tensor& v, RowOp op, const char* name) {
  require_rowwise(a, v, name);
  const std::size_t m = a.rows(), n = a.cols();
  auto ad = a.data();
  auto vd = v.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double x = ad[i * n + j], y = vd[j];
      switch (op) {
        case RowOp::kAdd: out[i * n + j] = x + y; break;
        case RowOp::kSub: out[i * n + j] = x - y; break;
        case RowOp::kMul: out[i * n + j] = x * y; break;
        case RowOp::kDiv: out[i * n + j] = x / y; break;
      }
    }
  auto an = a.node();
  auto vn = v.node();
  return make_result(
      a.shape(), std::move(out), {a, v},
      [an, vn, m, n, op](std::span<const double> g,
                         std::span<std::vector<double>*> pg) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) {
            const std::size_t idx = i * n + j;
            const double x = an->data[idx], y = vn->data[j];
            double da = 0.0, dv = 0.0;
            switch (op) {
              case RowOp::kAdd: da = 1.0; dv = 1.0; break;
              case RowOp::kSub: da = 1.0; dv = -1.0; break;
              case RowOp::kMul: da = y; dv = x; break;
              case RowOp::kDiv: da = 1.0 / y; dv = -x / (y * y); break;
            }
            if (pg[0]) (*pg[0])[idx] += g[idx] * da;
            if (pg[1]) (*pg[1])[j] += g[idx] * dv;
          }
      });
}

}  // namespace

Tensor add_rowwise(const Tensor& a, const Tensor& v) {
  return rowwise(a, v, RowOp::kAdd, "add_rowwise");
}
Tensor sub_rowwise(const Tensor& a, const Tensor& v) {
  return rowwise(a, v, RowOp::kSub, "sub_rowwise");
}
Tensor mul_rowwise(const Tensor& a, const Tensor& v) {
  return rowwise(a, v, RowOp::kMul, "mul_rowwise");
}
Tensor div_rowwise(const Tensor& a, const Tensor& v) {
  return rowwise(a, v, RowOp::kDiv, "div_rowwise");
}

Tensor exp(const Tensor& a) {
  return unary(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(
      a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
  return unary(
      a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

Tensor relu(const Tensor& a) { return clamp_min(a, 0.0); }

Tensor clamp_min(const Tensor& a, double floor) {
  return unary(
      a, [floor](double x) { return x > floor ? x : floor; },
      [floor](double x, double) { return x > floor ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& a) {
  require_defined(a, "sum");
  auto d = a.data();
  double total = std::accumulate(d.begin(), d.end(), 0.0);
  return make_result({}, {total}, {a},
                     [](std::span<const double> g,
                        std::span<std::vector<double>*> pg) {
                       for (double& v : *pg[0]) v += g[0];
                     });
}

Tensor mean(const Tensor& a) {
  return mul_scalar(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor row_sum(const Tensor& a) {
  require_rank2(a, "row_sum");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m, 0.0);
  auto d = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += d[i * n + j];
  return make_result({m}, std::move(out), {a},
                     [m, n](std::span<const double> g,
                            std::span<std::vector<double>*> pg) {
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t j = 0; j < n; ++j)
                           (*pg[0])[i * n + j] += g[i];
                     });
}

Tensor column_mean(const Tensor& a) {
  require_rank2(a, "column_mean");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(n, 0.0);
  auto d = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += d[i * n + j];
  for (double& v : out) v /= static_cast<double>(m);
  return make_result({n}, std::move(out), {a},
                     [m, n](std::span<const double> g,
                            std::span<std::vector<double>*> pg) {
                       const double inv = 1.0 / static_cast<double>(m);
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t j = 0; j < n; ++j)
                           (*pg[0])[i * n + j] += g[j] * inv;
                     });
}

Tensor column_var(const Tensor& a) {
  require_rank2(a, "column_var");
  const std::size_t m = a.rows(), n = a.cols();
  auto d = a.data();
  std::vector<double> mu(n, 0.0), out(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) mu[j] += d[i * n + j];
  for (double& v : mu) v /= static_cast<double>(m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double c = d[i * n + j] - mu[j];
      out[j] += c * c;
    }
  for (double& v : out) v /= static_cast<double>(m);
  auto an = a.node();
  return make_result(
      {n}, std::move(out), {a},
      [an, mu, m, n](std::span<const double> g,
                     std::span<std::vector<double>*> pg) {
        const double scale = 2.0 / static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j)
            (*pg[0])[i * n + j] += g[j] * scale * (an->data[i * n + j] - mu[j]);
      });
}

Tensor softmax(const Tensor& logits) {
  require_rank2(logits, "softmax");
  require_finite(logits.data(), "softmax");
  const std::size_t m = logits.rows(), n = logits.cols();
  auto d = logits.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = d.data() + i * n;
    const double peak = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = std::exp(row[j] - peak);
      total += out[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= total;
  }
  auto result = make_result(logits.shape(), std::move(out), {logits}, nullptr);
  if (!result.requires_grad()) return result;
  std::weak_ptr<Node> self = result.node();
  result.node()->backward = [self, m, n](std::span<const double> g,
                                         std::span<std::vector<double>*> pg) {
    auto y = self.lock();
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y->data[i * n + j];
      for (std::size_t j = 0; j < n; ++j)
        (*pg[0])[i * n + j] += y->data[i * n + j] * (g[i * n + j] - dot);
    }
  };
  return result;
}

Tensor log_softmax(const Tensor& logits) {
  require_rank2(logits, "log_softmax");
  require_finite(logits.data(), "log_softmax");
  const std::size_t m = logits.rows(), n = logits.cols();
  auto d = logits.data();
  std::vector<double> out(m * n), probs(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = d.data() + i * n;
    const double peak = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += std::exp(row[j] - peak);
    const double lse = peak + std::log(total);
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = row[j] - lse;
      probs[i * n + j] = std::exp(out[i * n + j]);
    }
  }
  return make_result(
      logits.shape(), std::move(out), {logits},
      [probs = std::move(probs), m, n](std::span<const double> g,
                                       std::span<std::vector<double>*> pg) {
        for (std::size_t i = 0; i < m; ++i) {
          double total = 0.0;
          for (std::size_t j = 0; j < n; ++j) total += g[i * n + j];
          for (std::size_t j = 0; j < n; ++j)
            (*pg[0])[i * n + j] += g[i * n + j] - probs[i * n + j] * total;
        }
      });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_rank2(a, "concat_cols");
  require_rank2(b, "concat_cols");
  if (a.rows() != b.rows()) {
    throw DimensionError("concat_cols: row counts differ " +
                         shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.rows(), na = a.cols(), nb = b.cols();
  const std::size_t n = na + nb;
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(a.data().begin() + i * na, na, out.begin() + i * n);
    std::copy_n(b.data().begin() + i * nb, nb, out.begin() + i * n + na);
  }
  return make_result({m, n}, std::move(out), {a, b},
                     [m, na, nb, n](std::span<const double> g,
                                    std::span<std::vector<double>*> pg) {
                       for (std::size_t i = 0; i < m; ++i) {
                         if (pg[0])
                           for (std::size_t j = 0; j < na; ++j)
                             (*pg[0])[i * na + j] += g[i * n + j];
                         if (pg[1])
                           for (std::size_t j = 0; j < nb; ++j)
                             (*pg[1])[i * nb + j] += g[i * n + na + j];
                       }
                     });
}

std::vector<std::size_t> argmax_rows(const Tensor& a) {
  require_rank2(a, "argmax_rows");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<std::size_t> out(m);
  auto d = a.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = d.data() + i * n;
    // max_element returns the first maximum, i.e. the lowest index on ties.
    out[i] = static_cast<std::size_t>(std::max_element(row, row + n) - row);
  }
  return out;
}

}  // namespace adadfq
