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

#ifndef ADADFQ_TENSOR_H_
#define ADADFQ_TENSOR_H_

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace adadfq {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace internal {
struct Node;
}  // namespace internal

// Dense row-major float64 array with an optional slot in a reverse-mode
// differentiation graph.
//
// A Tensor is a shared handle: copies alias the same storage and gradient.
// Use detach() to obtain an independent value. Rank is 0 (scalar), 1 or 2.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  // For rank-2 tensors. rows() of a rank-1 tensor is its length.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  // In-place access that bypasses the graph (optimizers, initializers).
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t i) const { return data()[i]; }
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool requires_grad);

  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  // Reverse pass from a scalar. Gradients of leaves accumulate across calls;
  // interior nodes are recomputed fresh on every call.
  void backward() const;

  // Independent copy of the values, outside any graph.
  Tensor detach() const;

  bool is_same(const Tensor& other) const { return node_ == other.node_; }
  const std::shared_ptr<internal::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<internal::Node> node);
  std::shared_ptr<internal::Node> node_;

  friend Tensor make_result(Shape, std::vector<double>,
                            std::vector<Tensor>,
                            std::function<void(std::span<const double>,
                                               std::span<std::vector<double>*>)>);
};

// Receives the output gradient and one pointer per parent; a pointer is null
// when that parent does not need a gradient. Implementations accumulate.
using BackwardFn = std::function<void(std::span<const double> grad_out,
                                      std::span<std::vector<double>*> parent_grads)>;

// Builds an op output. The graph edge is recorded only when gradients are
// enabled and some parent requires a gradient.
Tensor make_result(Shape shape, std::vector<double> data,
                   std::vector<Tensor> parents, BackwardFn backward);

bool grad_enabled();

// Disables graph construction on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// ---- Primitive ops ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);
Tensor neg(const Tensor& a);

// Row broadcasting: `a` is [m x n], `v` is [n] and is applied to every row.
Tensor add_rowwise(const Tensor& a, const Tensor& v);
Tensor sub_rowwise(const Tensor& a, const Tensor& v);
Tensor mul_rowwise(const Tensor& a, const Tensor& v);
Tensor div_rowwise(const Tensor& a, const Tensor& v);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor relu(const Tensor& a);
// max(a, floor) elementwise. The subgradient at a == floor is 0.
Tensor clamp_min(const Tensor& a, double floor);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// [m x n] -> [m]
Tensor row_sum(const Tensor& a);
// [m x n] -> [n]
Tensor column_mean(const Tensor& a);
// Biased (population) variance per column, [m x n] -> [n].
Tensor column_var(const Tensor& a);

// Row-wise, with max subtraction. Rejects non-finite input.
Tensor softmax(const Tensor& logits);
Tensor log_softmax(const Tensor& logits);

// [m x a] ++ [m x b] -> [m x (a+b)]
Tensor concat_cols(const Tensor& a, const Tensor& b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double c) { return mul_scalar(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return mul_scalar(a, c); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// Row-wise argmax, ties resolved to the lowest index.
std::vector<std::size_t> argmax_rows(const Tensor& a);

}  // namespace adadfq

#endif  // ADADFQ_TENSOR_H_
