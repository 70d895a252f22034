// Copyright 2026 The GDB Authors. All Rights Reserved.
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

// A small dense NCHW tensor with define-by-run reverse-mode differentiation.
//
// Every op that sees at least one differentiable operand records a node that
// holds its parents and a backward closure. Nodes carry a creation sequence
// number, so sorting reachable nodes by descending sequence yields a valid
// reverse topological order for the backward sweep. Graphs are released when
// the last Tensor handle referencing the output goes away.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "gdb/error.hpp"

namespace gdb {

#ifdef GDB_REAL
using Real = GDB_REAL;
#else
using Real = float;
#endif

struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t size() const { return static_cast<std::size_t>(n) * c * h * w; }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  friend bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    std::ostringstream os;
    os << '[' << n << ',' << c << ',' << h << ',' << w << ']';
    return os.str();
  }
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<Real> value;
  std::vector<Real> grad;
  bool requires_grad = false;
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), Real(0));
  }
};

inline std::uint64_t next_seq() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

inline bool& no_grad_flag() {
  thread_local bool flag = false;
  return flag;
}

}  // namespace detail

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::no_grad_flag()) { detail::no_grad_flag() = true; }
  ~NoGradGuard() { detail::no_grad_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool grad_enabled() { return !detail::no_grad_flag(); }

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = Real(0)) : node_(std::make_shared<detail::Node>()) {
    node_->shape = shape;
    node_->value.assign(shape.size(), fill);
    node_->seq = detail::next_seq();
  }
  Tensor(Shape shape, std::vector<Real> values) : Tensor(shape) {
    if (values.size() != shape.size()) throw ShapeError("value count does not match shape " + shape.str());
    node_->value = std::move(values);
  }

  // A differentiable leaf.
  static Tensor parameter(Shape shape, Real fill = Real(0)) {
    Tensor t(shape, fill);
    t.node_->requires_grad = true;
    return t;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->value.size(); }

  std::span<Real> data() { return node_->value; }
  std::span<const Real> data() const { return node_->value; }
  Real& operator[](std::size_t i) { return node_->value[i]; }
  Real operator[](std::size_t i) const { return node_->value[i]; }
  Real& at(int n, int c, int y, int x) { return node_->value[index(n, c, y, x)]; }
  Real at(int n, int c, int y, int x) const { return node_->value[index(n, c, y, x)]; }
  Real item() const {
    if (numel() != 1) throw ArgumentError("item() on a tensor with " + std::to_string(numel()) + " elements");
    return node_->value[0];
  }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  std::span<Real> grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  std::span<const Real> grad() const {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), Real(0));
  }

  // Copy of the values cut from the graph.
  Tensor detach() const { return Tensor(shape(), node_->value); }

  // Reverse-mode sweep from this scalar; gradients accumulate into leaves.
  void backward() const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  std::size_t index(int n, int c, int y, int x) const {
    const Shape& s = node_->shape;
    return ((static_cast<std::size_t>(n) * s.c + c) * s.h + y) * s.w + x;
  }

  std::shared_ptr<detail::Node> node_;
  friend Tensor make_result(Shape, std::vector<Real>, std::initializer_list<Tensor>, std::function<void(detail::Node&)>);
  friend Tensor make_result(Shape, std::vector<Real>, const std::vector<Tensor>&, std::function<void(detail::Node&)>);
};

inline void check_finite(const std::vector<Real>& values, const char* what) {
#ifndef NDEBUG
  for (Real v : values)
    if (!std::isfinite(v)) throw NumericalError(std::string("non-finite value produced by ") + what);
#else
  (void)values;
  (void)what;
#endif
}

// Builds an op output. The backward closure receives the output node (whose
// grad is the upstream gradient) and must accumulate into its parents.
inline Tensor make_result(Shape shape, std::vector<Real> values, const std::vector<Tensor>& parents,
                          std::function<void(detail::Node&)> backward) {
  Tensor out(shape, std::move(values));
  if (!grad_enabled()) return out;
  bool needs = false;
  for (const Tensor& p : parents) needs = needs || p.requires_grad();
  if (!needs) return out;
  out.node_->requires_grad = true;
  for (const Tensor& p : parents) out.node_->parents.push_back(p.node_);
  out.node_->backward = std::move(backward);
  return out;
}

inline Tensor make_result(Shape shape, std::vector<Real> values, std::initializer_list<Tensor> parents,
                          std::function<void(detail::Node&)> backward) {
  return make_result(shape, std::move(values), std::vector<Tensor>(parents), std::move(backward));
}

inline void Tensor::backward() const {
  if (!node_ || !node_->requires_grad) throw StateError("backward() on a tensor without a recorded graph");
  if (numel() != 1) throw ArgumentError("backward() requires a scalar output");
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<detail::Node*> stack{node_.get()};
  while (!stack.empty()) {
    detail::Node* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    order.push_back(n);
    for (const auto& p : n->parents)
      if (p->requires_grad) stack.push_back(p.get());
  }
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->seq > b->seq; });
  node_->ensure_grad();
  node_->grad[0] += Real(1);
  for (detail::Node* n : order) {
    if (!n->backward) continue;
    n->ensure_grad();
    for (const auto& p : n->parents)
      if (p->requires_grad) p->ensure_grad();
    n->backward(*n);
    // interior gradients are no longer needed once propagated
    if (n != node_.get()) std::vector<Real>().swap(n->grad);
  }
}

// ---------------------------------------------------------------------------
// elementwise and structural ops

namespace detail {

template <class Fwd, class Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv, const char* name) {
  std::vector<Real> v(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = fwd(in[i]);
  check_finite(v, name);
  Node* px = x.node();
  return make_result(x.shape(), std::move(v), {x}, [px, deriv](Node& self) {
    if (!px->requires_grad) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) px->grad[i] += self.grad[i] * deriv(px->value[i], self.value[i]);
  });
}

inline void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (!(a.shape() == b.shape()))
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
}

}  // namespace detail

inline Real sigmoid_scalar(Real x) {
  return x >= 0 ? Real(1) / (Real(1) + std::exp(-x)) : std::exp(x) / (Real(1) + std::exp(x));
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary(x, sigmoid_scalar, [](Real, Real y) { return y * (Real(1) - y); }, "sigmoid");
}

inline Tensor relu(const Tensor& x) {
  return detail::unary(
      x, [](Real v) { return v > 0 ? v : Real(0); }, [](Real v, Real) { return v > 0 ? Real(1) : Real(0); }, "relu");
}

inline Tensor leaky_relu(const Tensor& x, Real alpha = Real(0.2)) {
  return detail::unary(
      x, [alpha](Real v) { return v > 0 ? v : alpha * v; },
      [alpha](Real v, Real) { return v > 0 ? Real(1) : alpha; }, "leaky_relu");
}

inline Tensor tanh(const Tensor& x) {
  return detail::unary(
      x, [](Real v) { return std::tanh(v); }, [](Real, Real y) { return Real(1) - y * y; }, "tanh");
}

// a * x + b elementwise.
inline Tensor affine(const Tensor& x, Real a, Real b) {
  return detail::unary(
      x, [a, b](Real v) { return a * v + b; }, [a](Real, Real) { return a; }, "affine");
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same(a, b, "add");
  std::vector<Real> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] + b[i];
  detail::Node *pa = a.node(), *pb = b.node();
  return make_result(a.shape(), std::move(v), {a, b}, [pa, pb](detail::Node& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (pa->requires_grad) pa->grad[i] += self.grad[i];
      if (pb->requires_grad) pb->grad[i] += self.grad[i];
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) { return add(a, affine(b, Real(-1), Real(0))); }

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same(a, b, "mul");
  std::vector<Real> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * b[i];
  detail::Node *pa = a.node(), *pb = b.node();
  return make_result(a.shape(), std::move(v), {a, b}, [pa, pb](detail::Node& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (pa->requires_grad) pa->grad[i] += self.grad[i] * pb->value[i];
      if (pb->requires_grad) pb->grad[i] += self.grad[i] * pa->value[i];
    }
  });
}

// Sum of weighted scalars; the building block for composite objectives.
inline Tensor weighted_sum(const std::vector<Tensor>& terms, const std::vector<Real>& weights) {
  if (terms.size() != weights.size()) throw ArgumentError("weighted_sum: term/weight count mismatch");
  Real total = 0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (terms[i].numel() != 1) throw ShapeError("weighted_sum expects scalar terms");
    total += weights[i] * terms[i].item();
  }
  std::vector<detail::Node*> nodes;
  for (const Tensor& t : terms) nodes.push_back(t.node());
  return make_result(Shape{}, {total}, terms, [nodes, weights](detail::Node& self) {
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i]->requires_grad) nodes[i]->grad[0] += self.grad[0] * weights[i];
  });
}

inline Tensor sum(const Tensor& x) {
  Real s = 0;
  for (Real v : x.data()) s += v;
  detail::Node* px = x.node();
  return make_result(Shape{}, {s}, {x}, [px](detail::Node& self) {
    for (Real& g : px->grad) g += self.grad[0];
  });
}

inline Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ArgumentError("mean of an empty tensor");
  return affine(sum(x), Real(1) / static_cast<Real>(x.numel()), Real(0));
}

// Concatenate along the channel axis; batch and spatial dims must agree.
inline Tensor concat_channels(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ArgumentError("concat of zero tensors");
  Shape out = parts[0].shape();
  out.c = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    if (s.n != out.n || s.h != out.h || s.w != out.w)
      throw ShapeError("concat: incompatible shapes " + parts[0].shape().str() + " vs " + s.str());
    out.c += s.c;
  }
  std::vector<Real> v(out.size());
  const std::size_t plane = out.plane();
  std::vector<detail::Node*> nodes;
  for (int n = 0, offset = 0; n < out.n; ++n, offset = 0)
    for (const Tensor& p : parts) {
      const std::size_t chunk = p.shape().c * plane;
      std::copy_n(p.data().begin() + n * chunk, chunk, v.begin() + (static_cast<std::size_t>(n) * out.c + offset) * plane);
      offset += p.shape().c;
    }
  for (const Tensor& p : parts) nodes.push_back(p.node());
  return make_result(out, std::move(v), parts, [nodes, out, plane](detail::Node& self) {
    for (int n = 0; n < out.n; ++n) {
      int offset = 0;
      for (detail::Node* p : nodes) {
        const std::size_t chunk = p->shape.c * plane;
        if (p->requires_grad) {
          auto src = self.grad.begin() + (static_cast<std::size_t>(n) * out.c + offset) * plane;
          auto dst = p->grad.begin() + n * chunk;
          for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
        }
        offset += p->shape.c;
      }
    }
  });
}

// Spatial crop [y, y+h) x [x, x+w) of every channel.
inline Tensor crop(const Tensor& t, int x, int y, int w, int h) {
  const Shape& s = t.shape();
  if (x < 0 || y < 0 || w < 1 || h < 1 || x + w > s.w || y + h > s.h) throw ArgumentError("tensor crop outside bounds");
  const Shape out{s.n, s.c, h, w};
  std::vector<Real> v(out.size());
  for (int p = 0; p < s.n * s.c; ++p)
    for (int r = 0; r < h; ++r)
      std::copy_n(t.data().begin() + (static_cast<std::size_t>(p) * s.h + y + r) * s.w + x, w,
                  v.begin() + (static_cast<std::size_t>(p) * h + r) * w);
  detail::Node* pt = t.node();
  return make_result(out, std::move(v), {t}, [pt, s, x, y, w, h](detail::Node& self) {
    for (int p = 0; p < s.n * s.c; ++p)
      for (int r = 0; r < h; ++r)
        for (int q = 0; q < w; ++q)
          pt->grad[(static_cast<std::size_t>(p) * s.h + y + r) * s.w + x + q] +=
              self.grad[(static_cast<std::size_t>(p) * h + r) * w + q];
  });
}

// Differentiable bilinear resize with half-pixel-center alignment.
inline Tensor resize_bilinear(const Tensor& t, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) throw ArgumentError("resize target must be at least 1x1");
  const Shape& s = t.shape();
  struct Tap {
    int lo, hi;
    Real frac;
  };
  auto taps = [](int in, int out) {
    std::vector<Tap> v(out);
    const double scale = static_cast<double>(in) / out;
    for (int d = 0; d < out; ++d) {
      const double src = std::clamp((d + 0.5) * scale - 0.5, 0.0, static_cast<double>(in - 1));
      const int lo = static_cast<int>(std::floor(src));
      v[d] = {lo, std::min(lo + 1, in - 1), static_cast<Real>(src - lo)};
    }
    return v;
  };
  const auto tx = taps(s.w, out_w);
  const auto ty = taps(s.h, out_h);
  const Shape out{s.n, s.c, out_h, out_w};
  std::vector<Real> v(out.size());
  for (int p = 0; p < s.n * s.c; ++p) {
    const Real* src = t.data().data() + static_cast<std::size_t>(p) * s.plane();
    Real* dst = v.data() + static_cast<std::size_t>(p) * out.plane();
    for (int y = 0; y < out_h; ++y)
      for (int x = 0; x < out_w; ++x) {
        const Tap &a = ty[y], &b = tx[x];
        dst[y * out_w + x] = (src[a.lo * s.w + b.lo] * (1 - b.frac) + src[a.lo * s.w + b.hi] * b.frac) * (1 - a.frac) +
                             (src[a.hi * s.w + b.lo] * (1 - b.frac) + src[a.hi * s.w + b.hi] * b.frac) * a.frac;
      }
  }
  detail::Node* pt = t.node();
  return make_result(out, std::move(v), {t}, [pt, s, out, tx, ty](detail::Node& self) {
    for (int p = 0; p < s.n * s.c; ++p) {
      Real* dsrc = pt->grad.data() + static_cast<std::size_t>(p) * s.plane();
      const Real* g = self.grad.data() + static_cast<std::size_t>(p) * out.plane();
      for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x) {
          const Tap &a = ty[y], &b = tx[x];
          const Real gv = g[y * out.w + x];
          dsrc[a.lo * s.w + b.lo] += gv * (1 - a.frac) * (1 - b.frac);
          dsrc[a.lo * s.w + b.hi] += gv * (1 - a.frac) * b.frac;
          dsrc[a.hi * s.w + b.lo] += gv * a.frac * (1 - b.frac);
          dsrc[a.hi * s.w + b.hi] += gv * a.frac * b.frac;
        }
    }
  });
}

}  // namespace gdb
