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

#include "compexp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>
#include <utility>

namespace compexp {

namespace {

thread_local bool t_grad_enabled = true;

const std::vector<double> kEmptyGrad;

[[noreturn]] void throw_shape(const std::string& op, const Shape& a, const Shape& b) {
  throw ShapeError(op + ": incompatible shapes " + shape_to_string(a) + " and " +
                   shape_to_string(b));
}

void require(bool cond, const std::string& message) {
  if (!cond) throw std::invalid_argument(message);
}

}  // namespace

namespace detail {
bool grad_enabled() { return t_grad_enabled; }
}  // namespace detail

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

// ---------------------------------------------------------------------------
// Tensor handle
// ---------------------------------------------------------------------------

Tensor make_op_result(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
                      std::function<void(detail::Node&)> backward_fn) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (t_grad_enabled) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(parents.size());
      for (const auto& p : parents) node->parents.push_back(p.node());
      node->backward_fn = std::move(backward_fn);
    }
  }
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  std::vector<double> data(shape_numel(shape), value);
  return from_vector(std::move(data), std::move(shape));
}

Tensor Tensor::scalar(double value) { return from_vector({value}, Shape{1}); }

Tensor Tensor::from_vector(std::vector<double> values, Shape shape) {
  require(values.size() == shape_numel(shape),
          "Tensor: data length " + std::to_string(values.size()) +
              " does not match shape " + shape_to_string(shape));
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  return Tensor(std::move(node));
}

Tensor Tensor::leaf(std::vector<double> values, Shape shape) {
  Tensor t = from_vector(std::move(values), std::move(shape));
  t.node_->requires_grad = true;
  return t;
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::numel() const { return node_->value.size(); }
std::size_t Tensor::ndim() const { return node_->shape.size(); }
const std::vector<double>& Tensor::values() const { return node_->value; }

std::vector<double>& Tensor::mutable_values() {
  require(node_->parents.empty(), "mutable_values: only leaf tensors may be mutated");
  return node_->value;
}

const std::vector<double>& Tensor::grad() const {
  return node_->grad.empty() ? kEmptyGrad : node_->grad;
}

bool Tensor::has_grad() const { return !node_->grad.empty(); }

void Tensor::zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

double Tensor::item() const {
  require(numel() == 1, "item: tensor has " + std::to_string(numel()) +
                            " elements, expected exactly 1");
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor Tensor::detach() const {
  auto node = std::make_shared<detail::Node>();
  node->shape = node_->shape;
  node->value = node_->value;
  return Tensor(std::move(node));
}

// ---------------------------------------------------------------------------
// Ops
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto an = a.node();
  const auto bn = b.node();
  const Shape& sa = an->shape;
  const Shape& sb = bn->shape;

  if (sa.size() == 2 && sb.size() == 2) {
    const std::size_t m = sa[0], k = sa[1], n = sb[1];
    if (sb[0] != k) throw_shape("matmul", sa, sb);
    std::vector<double> out(m * n, 0.0);
    const auto& av = an->value;
    const auto& bv = bn->value;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double aik = av[i * k + kk];
        if (aik == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aik * bv[kk * n + j];
      }
    return make_op_result({m, n}, std::move(out), {a, b}, [an, bn, m, k, n](detail::Node& self) {
      const auto& g = self.grad;
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t kk = 0; kk < k; ++kk) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bn->value[kk * n + j];
            an->grad[i * k + kk] += acc;
          }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t kk = 0; kk < k; ++kk)
          for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < m; ++i) acc += an->value[i * k + kk] * g[i * n + j];
            bn->grad[kk * n + j] += acc;
          }
      }
    });
  }

  if (sa.size() == 2 && sb.size() == 1) {
    const std::size_t m = sa[0], k = sa[1];
    if (sb[0] != k) throw_shape("matmul", sa, sb);
    std::vector<double> out(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      double acc = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) acc += an->value[i * k + kk] * bn->value[kk];
      out[i] = acc;
    }
    return make_op_result({m}, std::move(out), {a, b}, [an, bn, m, k](detail::Node& self) {
      const auto& g = self.grad;
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t kk = 0; kk < k; ++kk) an->grad[i * k + kk] += g[i] * bn->value[kk];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t kk = 0; kk < k; ++kk) {
          double acc = 0.0;
          for (std::size_t i = 0; i < m; ++i) acc += an->value[i * k + kk] * g[i];
          bn->grad[kk] += acc;
        }
      }
    });
  }

  if (sa.size() == 1 && sb.size() == 2) {
    const std::size_t k = sa[0], n = sb[1];
    if (sb[0] != k) throw_shape("matmul", sa, sb);
    std::vector<double> out(n, 0.0);
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = an->value[kk];
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out[j] += av * bn->value[kk * n + j];
    }
    return make_op_result({n}, std::move(out), {a, b}, [an, bn, k, n](detail::Node& self) {
      const auto& g = self.grad;
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t kk = 0; kk < k; ++kk) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += bn->value[kk * n + j] * g[j];
          an->grad[kk] += acc;
        }
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t kk = 0; kk < k; ++kk)
          for (std::size_t j = 0; j < n; ++j) bn->grad[kk * n + j] += an->value[kk] * g[j];
      }
    });
  }

  throw_shape("matmul", sa, sb);
}

namespace {

enum class Elementwise { kAdd, kSub, kMul };

Tensor binary_elementwise(const Tensor& a, const Tensor& b, Elementwise kind, const char* name) {
  const auto an = a.node();
  const auto bn = b.node();

  // Row-broadcast bias pattern: (M,N) op (N).
  const bool broadcast = an->shape.size() == 2 && bn->shape.size() == 1 &&
                         an->shape[1] == bn->shape[0];
  if (!broadcast && an->shape != bn->shape) throw_shape(name, an->shape, bn->shape);

  const std::size_t n = an->value.size();
  const std::size_t cols = broadcast ? bn->value.size() : n;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double bv = bn->value[broadcast ? i % cols : i];
    switch (kind) {
      case Elementwise::kAdd: out[i] = an->value[i] + bv; break;
      case Elementwise::kSub: out[i] = an->value[i] - bv; break;
      case Elementwise::kMul: out[i] = an->value[i] * bv; break;
    }
  }
  return make_op_result(an->shape, std::move(out), {a, b},
                        [an, bn, kind, broadcast, cols](detail::Node& self) {
    const auto& g = self.grad;
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double bv = bn->value[broadcast ? i % cols : i];
        an->grad[i] += kind == Elementwise::kMul ? g[i] * bv : g[i];
      }
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const std::size_t bi = broadcast ? i % cols : i;
        switch (kind) {
          case Elementwise::kAdd: bn->grad[bi] += g[i]; break;
          case Elementwise::kSub: bn->grad[bi] -= g[i]; break;
          case Elementwise::kMul: bn->grad[bi] += g[i] * an->value[i]; break;
        }
      }
    }
  });
}

Tensor unary(const Tensor& a, double (*fwd)(double),
             double (*dydx_from_xy)(double x, double y)) {
  const auto an = a.node();
  std::vector<double> out(an->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(an->value[i]);
  return make_op_result(an->shape, std::move(out), {a}, [an, dydx_from_xy](detail::Node& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < self.value.size(); ++i)
      an->grad[i] += self.grad[i] * dydx_from_xy(an->value[i], self.value[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_elementwise(a, b, Elementwise::kAdd, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_elementwise(a, b, Elementwise::kSub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_elementwise(a, b, Elementwise::kMul, "mul"); }

Tensor scale(const Tensor& a, double factor) {
  const auto an = a.node();
  std::vector<double> out(an->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = an->value[i] * factor;
  return make_op_result(an->shape, std::move(out), {a}, [an, factor](detail::Node& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * factor;
  });
}

Tensor add_scalar(const Tensor& a, double value) {
  const auto an = a.node();
  std::vector<double> out(an->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = an->value[i] + value;
  return make_op_result(an->shape, std::move(out), {a}, [an](detail::Node& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
  });
}

Tensor tanh_op(const Tensor& a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
               [](double, double y) { return y * (1.0 - y); });
}

Tensor exp_op(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); },
               [](double, double y) { return y; });
}

Tensor log_op(const Tensor& a) {
  return unary(a, [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

namespace {

// Resolves (rows, cols, row_major) slicing for softmax-style ops: the op is
// applied independently over `count` slices of length `len` with stride.
struct AxisView {
  std::size_t count;   // number of independent slices
  std::size_t len;     // slice length
  std::size_t outer;   // stride between slices
  std::size_t inner;   // stride within a slice
};

AxisView resolve_axis(const Shape& shape, int axis, const char* name) {
  if (shape.size() == 1) {
    if (axis != 0 && axis != -1)
      throw std::invalid_argument(std::string(name) + ": axis out of range for 1-D tensor");
    return {1, shape[0], 0, 1};
  }
  if (shape.size() == 2) {
    if (axis == -1) axis = 1;
    if (axis == 1) return {shape[0], shape[1], shape[1], 1};  // per row
    if (axis == 0) return {shape[1], shape[0], 1, shape[1]};  // per column
    throw std::invalid_argument(std::string(name) + ": axis out of range for 2-D tensor");
  }
  throw std::invalid_argument(std::string(name) + ": only 1-D and 2-D tensors supported, got " +
                              shape_to_string(shape));
}

}  // namespace

Tensor softmax(const Tensor& a, int axis) {
  const auto an = a.node();
  const AxisView v = resolve_axis(an->shape, axis, "softmax");
  std::vector<double> out(an->value.size());
  for (std::size_t s = 0; s < v.count; ++s) {
    const std::size_t base = s * v.outer;
    double max = an->value[base];
    for (std::size_t i = 1; i < v.len; ++i) max = std::max(max, an->value[base + i * v.inner]);
    double denom = 0.0;
    for (std::size_t i = 0; i < v.len; ++i) {
      const double e = std::exp(an->value[base + i * v.inner] - max);
      out[base + i * v.inner] = e;
      denom += e;
    }
    for (std::size_t i = 0; i < v.len; ++i) out[base + i * v.inner] /= denom;
  }
  return make_op_result(an->shape, std::move(out), {a}, [an, v](detail::Node& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t s = 0; s < v.count; ++s) {
      const std::size_t base = s * v.outer;
      double gy = 0.0;
      for (std::size_t i = 0; i < v.len; ++i) {
        const std::size_t at = base + i * v.inner;
        gy += self.grad[at] * self.value[at];
      }
      for (std::size_t i = 0; i < v.len; ++i) {
        const std::size_t at = base + i * v.inner;
        an->grad[at] += self.value[at] * (self.grad[at] - gy);
      }
    }
  });
}

Tensor log_softmax(const Tensor& a, int axis) {
  const auto an = a.node();
  const AxisView v = resolve_axis(an->shape, axis, "log_softmax");
  std::vector<double> out(an->value.size());
  for (std::size_t s = 0; s < v.count; ++s) {
    const std::size_t base = s * v.outer;
    double max = an->value[base];
    for (std::size_t i = 1; i < v.len; ++i) max = std::max(max, an->value[base + i * v.inner]);
    double denom = 0.0;
    for (std::size_t i = 0; i < v.len; ++i) denom += std::exp(an->value[base + i * v.inner] - max);
    const double lse = max + std::log(denom);
    for (std::size_t i = 0; i < v.len; ++i)
      out[base + i * v.inner] = an->value[base + i * v.inner] - lse;
  }
  return make_op_result(an->shape, std::move(out), {a}, [an, v](detail::Node& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (std::size_t s = 0; s < v.count; ++s) {
      const std::size_t base = s * v.outer;
      double gsum = 0.0;
      for (std::size_t i = 0; i < v.len; ++i) gsum += self.grad[base + i * v.inner];
      for (std::size_t i = 0; i < v.len; ++i) {
        const std::size_t at = base + i * v.inner;
        an->grad[at] += self.grad[at] - std::exp(self.value[at]) * gsum;
      }
    }
  });
}

Tensor logsumexp(const Tensor& a) {
  const auto an = a.node();
  require(an->shape.size() == 1, "logsumexp: expected 1-D tensor, got " +
                                     shape_to_string(an->shape));
  double max = an->value[0];
  for (double x : an->value) max = std::max(max, x);
  double denom = 0.0;
  for (double x : an->value) denom += std::exp(x - max);
  const double out = max + std::log(denom);
  return make_op_result({1}, {out}, {a}, [an](detail::Node& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    const double g = self.grad[0];
    for (std::size_t i = 0; i < an->value.size(); ++i)
      an->grad[i] += g * std::exp(an->value[i] - self.value[0]);
  });
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  require(!parts.empty(), "concat: no inputs");
  const Shape& first = parts[0].shape();

  if (first.size() == 1) {
    require(axis == 0 || axis == -1, "concat: axis out of range for 1-D tensors");
    std::size_t total = 0;
    for (const auto& p : parts) {
      if (p.ndim() != 1) throw_shape("concat", first, p.shape());
      total += p.numel();
    }
    std::vector<double> out;
    out.reserve(total);
    std::vector<Tensor> parents(parts.begin(), parts.end());
    std::vector<std::shared_ptr<detail::Node>> nodes;
    for (const auto& p : parts) {
      out.insert(out.end(), p.values().begin(), p.values().end());
      nodes.push_back(p.node());
    }
    return make_op_result({total}, std::move(out), std::move(parents),
                          [nodes](detail::Node& self) {
      std::size_t offset = 0;
      for (const auto& n : nodes) {
        if (n->requires_grad) {
          n->ensure_grad();
          for (std::size_t i = 0; i < n->value.size(); ++i) n->grad[i] += self.grad[offset + i];
        }
        offset += n->value.size();
      }
    });
  }

  if (first.size() == 2) {
    if (axis == -1) axis = 1;
    require(axis == 0 || axis == 1, "concat: axis out of range for 2-D tensors");
    std::size_t rows_total = first[0], cols_total = first[1];
    for (std::size_t i = 1; i < parts.size(); ++i) {
      const Shape& s = parts[i].shape();
      if (s.size() != 2 || (axis == 0 ? s[1] != first[1] : s[0] != first[0]))
        throw_shape("concat", first, s);
      if (axis == 0) rows_total += s[0]; else cols_total += s[1];
    }
    if (axis == 0) {
      std::vector<double> out;
      out.reserve(rows_total * cols_total);
      std::vector<Tensor> parents(parts.begin(), parts.end());
      std::vector<std::shared_ptr<detail::Node>> nodes;
      for (const auto& p : parts) {
        out.insert(out.end(), p.values().begin(), p.values().end());
        nodes.push_back(p.node());
      }
      return make_op_result({rows_total, cols_total}, std::move(out), std::move(parents),
                            [nodes](detail::Node& self) {
        std::size_t offset = 0;
        for (const auto& n : nodes) {
          if (n->requires_grad) {
            n->ensure_grad();
            for (std::size_t i = 0; i < n->value.size(); ++i) n->grad[i] += self.grad[offset + i];
          }
          offset += n->value.size();
        }
      });
    }
    // axis == 1: column-wise concatenation.
    const std::size_t rows_n = first[0];
    std::vector<double> out(rows_n * cols_total);
    std::vector<Tensor> parents(parts.begin(), parts.end());
    std::vector<std::shared_ptr<detail::Node>> nodes;
    std::vector<std::size_t> widths;
    for (const auto& p : parts) {
      nodes.push_back(p.node());
      widths.push_back(p.shape()[1]);
    }
    std::size_t col = 0;
    for (std::size_t pi = 0; pi < nodes.size(); ++pi) {
      for (std::size_t r = 0; r < rows_n; ++r)
        for (std::size_t c = 0; c < widths[pi]; ++c)
          out[r * cols_total + col + c] = nodes[pi]->value[r * widths[pi] + c];
      col += widths[pi];
    }
    return make_op_result({rows_n, cols_total}, std::move(out), std::move(parents),
                          [nodes, widths, rows_n, cols_total](detail::Node& self) {
      std::size_t col = 0;
      for (std::size_t pi = 0; pi < nodes.size(); ++pi) {
        if (nodes[pi]->requires_grad) {
          nodes[pi]->ensure_grad();
          for (std::size_t r = 0; r < rows_n; ++r)
            for (std::size_t c = 0; c < widths[pi]; ++c)
              nodes[pi]->grad[r * widths[pi] + c] += self.grad[r * cols_total + col + c];
        }
        col += widths[pi];
      }
    });
  }

  throw std::invalid_argument("concat: only 1-D and 2-D tensors supported");
}

Tensor concat(const Tensor& a, const Tensor& b, int axis) {
  const Tensor parts[2] = {a, b};
  return concat(std::span<const Tensor>(parts, 2), axis);
}

Tensor stack(std::span<const Tensor> rows_in) {
  require(!rows_in.empty(), "stack: no inputs");
  const std::size_t d = rows_in[0].numel();
  std::vector<double> out;
  out.reserve(rows_in.size() * d);
  std::vector<Tensor> parents(rows_in.begin(), rows_in.end());
  std::vector<std::shared_ptr<detail::Node>> nodes;
  for (const auto& r : rows_in) {
    if (r.ndim() != 1 || r.numel() != d) throw_shape("stack", rows_in[0].shape(), r.shape());
    out.insert(out.end(), r.values().begin(), r.values().end());
    nodes.push_back(r.node());
  }
  return make_op_result({rows_in.size(), d}, std::move(out), std::move(parents),
                        [nodes, d](detail::Node& self) {
    for (std::size_t r = 0; r < nodes.size(); ++r) {
      if (!nodes[r]->requires_grad) continue;
      nodes[r]->ensure_grad();
      for (std::size_t i = 0; i < d; ++i) nodes[r]->grad[i] += self.grad[r * d + i];
    }
  });
}

Tensor slice(const Tensor& a, int axis, std::size_t start, std::size_t len) {
  const auto an = a.node();
  const Shape& s = an->shape;
  require(len >= 1, "slice: empty slice");

  if (s.size() == 1) {
    require(axis == 0 || axis == -1, "slice: axis out of range for 1-D tensor");
    require(start + len <= s[0], "slice: range [" + std::to_string(start) + ", " +
                                     std::to_string(start + len) + ") exceeds shape " +
                                     shape_to_string(s));
    std::vector<double> out(an->value.begin() + start, an->value.begin() + start + len);
    return make_op_result({len}, std::move(out), {a}, [an, start, len](detail::Node& self) {
      if (!an->requires_grad) return;
      an->ensure_grad();
      for (std::size_t i = 0; i < len; ++i) an->grad[start + i] += self.grad[i];
    });
  }

  if (s.size() == 2) {
    const std::size_t r = s[0], c = s[1];
    if (axis == 0) {
      require(start + len <= r, "slice: row range exceeds shape " + shape_to_string(s));
      std::vector<double> out(an->value.begin() + start * c,
                              an->value.begin() + (start + len) * c);
      return make_op_result({len, c}, std::move(out), {a}, [an, start, c, len](detail::Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < len * c; ++i) an->grad[start * c + i] += self.grad[i];
      });
    }
    if (axis == 1 || axis == -1) {
      require(start + len <= c, "slice: column range exceeds shape " + shape_to_string(s));
      std::vector<double> out(r * len);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < len; ++j) out[i * len + j] = an->value[i * c + start + j];
      return make_op_result({r, len}, std::move(out), {a},
                            [an, start, r, c, len](detail::Node& self) {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < len; ++j)
            an->grad[i * c + start + j] += self.grad[i * len + j];
      });
    }
    throw std::invalid_argument("slice: axis out of range for 2-D tensor");
  }

  throw std::invalid_argument("slice: only 1-D and 2-D tensors supported");
}

Tensor sum(const Tensor& a) {
  const auto an = a.node();
  double acc = 0.0;
  for (double x : an->value) acc += x;
  return make_op_result({1}, {acc}, {a}, [an](detail::Node& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (auto& g : an->grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  const auto an = a.node();
  const double inv = 1.0 / static_cast<double>(an->value.size());
  double acc = 0.0;
  for (double x : an->value) acc += x;
  return make_op_result({1}, {acc * inv}, {a}, [an, inv](detail::Node& self) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (auto& g : an->grad) g += self.grad[0] * inv;
  });
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  const auto an = a.node();
  const auto bn = b.node();
  if (an->shape.size() != 1 || an->shape != bn->shape)
    throw_shape("cosine_similarity", an->shape, bn->shape);
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < an->value.size(); ++i) {
    ab += an->value[i] * bn->value[i];
    aa += an->value[i] * an->value[i];
    bb += bn->value[i] * bn->value[i];
  }
  if (aa == 0.0 || bb == 0.0)
    throw std::domain_error("cosine_similarity: zero-norm vector (undefined cosine)");
  const double na = std::sqrt(aa), nb = std::sqrt(bb);
  const double cosv = ab / (na * nb);
  return make_op_result({1}, {cosv}, {a, b}, [an, bn, na, nb, cosv](detail::Node& self) {
    const double g = self.grad[0];
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < an->value.size(); ++i)
        an->grad[i] += g * (bn->value[i] / (na * nb) - cosv * an->value[i] / (na * na));
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < bn->value.size(); ++i)
        bn->grad[i] += g * (an->value[i] / (na * nb) - cosv * bn->value[i] / (nb * nb));
    }
  });
}

Tensor rows(const Tensor& table, std::span<const int> ids) {
  const auto tn = table.node();
  require(tn->shape.size() == 2, "rows: expected 2-D table, got " + shape_to_string(tn->shape));
  require(!ids.empty(), "rows: empty id list");
  const std::size_t v = tn->shape[0], e = tn->shape[1];
  std::vector<double> out(ids.size() * e);
  std::vector<int> idcopy(ids.begin(), ids.end());
  for (std::size_t i = 0; i < idcopy.size(); ++i) {
    const int id = idcopy[i];
    require(id >= 0 && static_cast<std::size_t>(id) < v,
            "rows: id " + std::to_string(id) + " out of range for table " +
                shape_to_string(tn->shape));
    std::copy_n(tn->value.begin() + static_cast<std::size_t>(id) * e, e, out.begin() + i * e);
  }
  return make_op_result({idcopy.size(), e}, std::move(out), {table},
                        [tn, idcopy, e](detail::Node& self) {
    if (!tn->requires_grad) return;
    tn->ensure_grad();
    for (std::size_t i = 0; i < idcopy.size(); ++i)
      for (std::size_t j = 0; j < e; ++j)
        tn->grad[static_cast<std::size_t>(idcopy[i]) * e + j] += self.grad[i * e + j];
  });
}

Tensor row(const Tensor& matrix, std::size_t index) {
  const auto mn = matrix.node();
  require(mn->shape.size() == 2, "row: expected 2-D tensor, got " + shape_to_string(mn->shape));
  const std::size_t r = mn->shape[0], c = mn->shape[1];
  require(index < r, "row: index " + std::to_string(index) + " out of range for shape " +
                         shape_to_string(mn->shape));
  std::vector<double> out(mn->value.begin() + index * c, mn->value.begin() + (index + 1) * c);
  return make_op_result({c}, std::move(out), {matrix}, [mn, index, c](detail::Node& self) {
    if (!mn->requires_grad) return;
    mn->ensure_grad();
    for (std::size_t j = 0; j < c; ++j) mn->grad[index * c + j] += self.grad[j];
  });
}

Tensor pick(const Tensor& vec, std::size_t index) {
  const auto vn = vec.node();
  require(vn->shape.size() == 1, "pick: expected 1-D tensor, got " + shape_to_string(vn->shape));
  require(index < vn->value.size(), "pick: index " + std::to_string(index) +
                                        " out of range for shape " + shape_to_string(vn->shape));
  return make_op_result({1}, {vn->value[index]}, {vec}, [vn, index](detail::Node& self) {
    if (!vn->requires_grad) return;
    vn->ensure_grad();
    vn->grad[index] += self.grad[0];
  });
}

Tensor dot(const Tensor& a, const Tensor& b) {
  const auto an = a.node();
  const auto bn = b.node();
  if (an->shape.size() != 1 || an->shape != bn->shape) throw_shape("dot", an->shape, bn->shape);
  double acc = 0.0;
  for (std::size_t i = 0; i < an->value.size(); ++i) acc += an->value[i] * bn->value[i];
  return make_op_result({1}, {acc}, {a, b}, [an, bn](detail::Node& self) {
    const double g = self.grad[0];
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < an->value.size(); ++i) an->grad[i] += g * bn->value[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < bn->value.size(); ++i) bn->grad[i] += g * an->value[i];
    }
  });
}

Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }
Tensor operator-(double s, const Tensor& a) { return add_scalar(scale(a, -1.0), s); }

void backward(const Tensor& output) {
  require(output.defined(), "backward: undefined tensor");
  if (output.numel() != 1)
    throw std::invalid_argument("backward: output has " + std::to_string(output.numel()) +
                                " elements, expected a scalar");
  auto root = output.node();
  if (!root->requires_grad) return;  // constant relative to all leaves

  // Iterative post-order DFS; reversing it yields a valid topological order
  // (consumers before producers). Each node enters the order exactly once.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  seen.insert(root.get());
  stack.emplace_back(root.get(), 0);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backward_fn) {
      node->ensure_grad();
      node->backward_fn(*node);
    }
  }
}

}  // namespace compexp
