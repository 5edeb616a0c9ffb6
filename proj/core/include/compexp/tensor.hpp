// Copyright 2026 The compexp Authors.
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

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace compexp {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Thrown on dimension mismatches; the message names both shapes involved.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

// One node of the computation graph. Interior nodes hold a backward closure
// that scatters this node's gradient into its parents.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily, same length as value
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::size_t numel() const { return value.size(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

bool grad_enabled();

}  // namespace detail

/// Disables graph recording in the current scope (inference paths).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Dense 64-bit float tensor with reverse-mode automatic differentiation.
///
/// Tensor is a cheap handle to a shared graph node. Ops are free functions
/// that record a backward closure whenever gradients are enabled and any
/// input requires them. Gradients accumulate across backward() calls; the
/// owner (ParamStore) is responsible for zeroing between optimizer steps.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor from_vector(std::vector<double> values, Shape shape);
  /// Leaf parameter: requires_grad is set regardless of the grad mode.
  static Tensor leaf(std::vector<double> values, Shape shape);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t numel() const;
  std::size_t ndim() const;

  const std::vector<double>& values() const;
  std::vector<double>& mutable_values();  // leaf tensors only (loading)
  /// Gradient buffer; zeros if backward has not reached this node.
  const std::vector<double>& grad() const;
  bool has_grad() const;
  void zero_grad();

  double item() const;  // single-element tensors only
  bool requires_grad() const;

  /// Value copy detached from the graph (never requires grad).
  Tensor detach() const;

  std::shared_ptr<detail::Node> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend Tensor make_op_result(Shape shape, std::vector<double> value,
                               std::vector<Tensor> parents,
                               std::function<void(detail::Node&)> backward_fn);

  std::shared_ptr<detail::Node> node_;
};

// ---------------------------------------------------------------------------
// Forward ops. All participate in the autodiff graph.
// ---------------------------------------------------------------------------

/// (M,K)x(K,N)->(M,N); (M,K)x(K)->(M); (K)x(K,N)->(N).
Tensor matmul(const Tensor& a, const Tensor& b);

/// Elementwise add of equal shapes, or (M,N)+(N) row-broadcast bias add.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise

Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);

Tensor tanh_op(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp_op(const Tensor& a);
Tensor log_op(const Tensor& a);

/// Softmax along `axis` (0 for 1-D tensors; 0=columns or 1=rows for 2-D),
/// computed with max subtraction.
Tensor softmax(const Tensor& a, int axis = -1);
Tensor log_softmax(const Tensor& a, int axis = -1);

/// log(sum(exp(a))) of a 1-D tensor, max-subtracted for stability.
Tensor logsumexp(const Tensor& a);

Tensor concat(std::span<const Tensor> parts, int axis = 0);
Tensor concat(const Tensor& a, const Tensor& b, int axis = 0);
/// Stacks k equal-length 1-D tensors into a (k, D) matrix.
Tensor stack(std::span<const Tensor> rows);

Tensor slice(const Tensor& a, int axis, std::size_t start, std::size_t len);

Tensor sum(const Tensor& a);   // -> scalar
Tensor mean(const Tensor& a);  // -> scalar

/// cos(a, b) of two equal-length 1-D tensors. Throws if either has zero norm.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);

/// Embedding gather: selects rows of a (V, E) matrix -> (ids.size(), E).
Tensor rows(const Tensor& table, std::span<const int> ids);
Tensor row(const Tensor& matrix, std::size_t index);  // -> 1-D
Tensor pick(const Tensor& vec, std::size_t index);    // 1-D element -> scalar
Tensor dot(const Tensor& a, const Tensor& b);         // 1-D . 1-D -> scalar

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator*(double s, const Tensor& a);
Tensor operator+(const Tensor& a, double s);
Tensor operator-(double s, const Tensor& a);

/// Reverse-mode sweep from a single-element tensor. Each reachable node is
/// visited exactly once; leaf gradients accumulate.
void backward(const Tensor& output);

}  // namespace compexp
