/*
 * Copyright 2026 The dgrl Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dgrl/autodiff/dual.hpp"
#include "dgrl/autodiff/ops.hpp"
#include "dgrl/autodiff/tape.hpp"
#include "dgrl/autodiff/tensor.hpp"
#include "dgrl/errors.hpp"

namespace dgrl::ad {

// A list of tensors shaped like a parameter set. Used both for gradients and
// for directions (the v of a Hessian-vector product).
class GradientVector {
 public:
  GradientVector() = default;
  explicit GradientVector(std::vector<Tensor> segments) : segments_(std::move(segments)) {}

  static GradientVector zeros_like(std::span<const Tensor> params) {
    std::vector<Tensor> segs;
    segs.reserve(params.size());
    for (const auto& p : params) segs.emplace_back(p.shape());
    return GradientVector(std::move(segs));
  }

  const std::vector<Tensor>& segments() const { return segments_; }
  std::vector<Tensor>& segments() { return segments_; }
  std::size_t num_segments() const { return segments_.size(); }
  const Tensor& operator[](std::size_t i) const { return segments_[i]; }
  Tensor& operator[](std::size_t i) { return segments_[i]; }

  std::size_t total_len() const {
    std::size_t n = 0;
    for (const auto& s : segments_) n += s.size();
    return n;
  }

  std::vector<double> flatten() const {
    std::vector<double> flat;
    flat.reserve(total_len());
    for (const auto& s : segments_) flat.insert(flat.end(), s.data().begin(), s.data().end());
    return flat;
  }

  // Inverse of flatten() given the segment shapes.
  static GradientVector unflatten(std::span<const double> flat, std::span<const Shape> shapes) {
    std::vector<Tensor> segs;
    std::size_t off = 0;
    for (const auto& shape : shapes) {
      const std::size_t n = shape_size(shape);
      if (off + n > flat.size()) throw ShapeMismatch("unflatten: flat vector too short");
      segs.emplace_back(shape, std::vector<double>(flat.begin() + static_cast<std::ptrdiff_t>(off),
                                                   flat.begin() + static_cast<std::ptrdiff_t>(off + n)));
      off += n;
    }
    if (off != flat.size()) throw ShapeMismatch("unflatten: flat vector too long");
    return GradientVector(std::move(segs));
  }

  std::vector<Shape> shapes() const {
    std::vector<Shape> out;
    for (const auto& s : segments_) out.push_back(s.shape());
    return out;
  }

  bool same_layout(std::span<const Tensor> other) const {
    if (other.size() != segments_.size()) return false;
    for (std::size_t i = 0; i < other.size(); ++i)
      if (other[i].shape() != segments_[i].shape()) return false;
    return true;
  }
  bool same_layout(const GradientVector& other) const { return same_layout(other.segments_); }

  // this += a * other
  GradientVector& axpy(double a, const GradientVector& other) {
    if (!same_layout(other)) throw ShapeMismatch("axpy: segment shapes differ");
    for (std::size_t s = 0; s < segments_.size(); ++s)
      for (std::size_t i = 0; i < segments_[s].size(); ++i)
        segments_[s][i] += a * other.segments_[s][i];
    return *this;
  }

  GradientVector& scale(double a) {
    for (auto& s : segments_)
      for (auto& v : s.data()) v *= a;
    return *this;
  }

  double max_abs() const {
    double m = 0.0;
    for (const auto& s : segments_)
      for (double v : s.data()) m = std::max(m, std::abs(v));
    return m;
  }

  friend bool operator==(const GradientVector&, const GradientVector&) = default;

 private:
  std::vector<Tensor> segments_;
};

// Sum over all elements of g1 * g2, across every segment.
inline double grad_dot(const GradientVector& g1, const GradientVector& g2) {
  if (!g1.same_layout(g2)) throw ShapeMismatch("grad_dot: segment shapes differ");
  double acc = 0.0;
  for (std::size_t s = 0; s < g1.num_segments(); ++s)
    for (std::size_t i = 0; i < g1[s].size(); ++i) acc += g1[s][i] * g2[s][i];
  return acc;
}

// A scalar-valued computation of a parameter set. It is called with a tape and
// one leaf per parameter tensor and must return a scalar node on that tape.
template <class E, class T>
concept ScalarExpressionOf = requires(const E& e, Tape<T>& tape, std::span<const Var<T>> params) {
  { e(tape, params) } -> std::same_as<Var<T>>;
};

template <class E>
concept ScalarExpression = ScalarExpressionOf<E, double>;

// Both real and dual evaluation, required by the exact Hessian-vector product.
template <class E>
concept TwiceDifferentiableExpression = ScalarExpressionOf<E, double> && ScalarExpressionOf<E, Dual>;

enum class HvpMode { exact, finite_difference };

inline const char* to_string(HvpMode m) {
  return m == HvpMode::exact ? "exact" : "finite_difference";
}

struct ValueAndGradient {
  double value = 0.0;
  GradientVector gradient;
};

template <ScalarExpression E>
ValueAndGradient value_and_gradient(const E& expr, std::span<const Tensor> params) {
  Tape<double> tape;
  std::vector<Var<double>> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(tape.leaf(p));
  Var<double> root = expr(tape, std::span<const Var<double>>(leaves));
  tape.backward(root);
  std::vector<Tensor> segs;
  segs.reserve(params.size());
  for (const auto& l : leaves) segs.push_back(l.grad());
  return {root.value()[0], GradientVector(std::move(segs))};
}

template <ScalarExpression E>
GradientVector gradient(const E& expr, std::span<const Tensor> params) {
  return value_and_gradient(expr, params).gradient;
}

template <ScalarExpression E>
double evaluate(const E& expr, std::span<const Tensor> params) {
  Tape<double> tape;
  std::vector<Var<double>> leaves;
  for (const auto& p : params) leaves.push_back(tape.leaf(p, false));
  return expr(tape, std::span<const Var<double>>(leaves)).value()[0];
}

struct GradientAndHvp {
  GradientVector gradient;
  GradientVector hvp;
};

// Forward-over-reverse: seed every parameter with tangent v and run the
// reverse sweep in dual arithmetic. The primal parts of the leaf gradients are
// the gradient, the tangent parts are H*v.
template <TwiceDifferentiableExpression E>
GradientAndHvp gradient_and_hvp(const E& expr, std::span<const Tensor> params,
                                const GradientVector& v) {
  if (!v.same_layout(params)) throw ShapeMismatch("hvp: direction does not match parameter shapes");
  Tape<Dual> tape;
  std::vector<Var<Dual>> leaves;
  leaves.reserve(params.size());
  for (std::size_t s = 0; s < params.size(); ++s) {
    BasicTensor<Dual> p(params[s].shape());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = Dual(params[s][i], v[s][i]);
    leaves.push_back(tape.leaf(std::move(p)));
  }
  Var<Dual> root = expr(tape, std::span<const Var<Dual>>(leaves));
  tape.backward(root);
  std::vector<Tensor> g, hv;
  for (const auto& l : leaves) {
    Tensor gs(l.shape()), hs(l.shape());
    for (std::size_t i = 0; i < gs.size(); ++i) {
      gs[i] = l.grad()[i].v;
      hs[i] = l.grad()[i].d;
    }
    g.push_back(std::move(gs));
    hv.push_back(std::move(hs));
  }
  return {GradientVector(std::move(g)), GradientVector(std::move(hv))};
}

// Symmetric difference of gradients, eps = 1e-4 * (1 + max|theta|).
template <ScalarExpression E>
GradientVector hvp_finite_difference(const E& expr, std::span<const Tensor> params,
                                     const GradientVector& v) {
  if (!v.same_layout(params)) throw ShapeMismatch("hvp: direction does not match parameter shapes");
  double theta_inf = 0.0;
  for (const auto& p : params)
    for (double x : p.data()) theta_inf = std::max(theta_inf, std::abs(x));
  const double eps = 1e-4 * (1.0 + theta_inf);
  std::vector<Tensor> plus(params.begin(), params.end()), minus(params.begin(), params.end());
  for (std::size_t s = 0; s < params.size(); ++s)
    for (std::size_t i = 0; i < params[s].size(); ++i) {
      plus[s][i] += eps * v[s][i];
      minus[s][i] -= eps * v[s][i];
    }
  GradientVector out = gradient(expr, std::span<const Tensor>(plus));
  out.axpy(-1.0, gradient(expr, std::span<const Tensor>(minus)));
  out.scale(1.0 / (2.0 * eps));
  return out;
}

template <ScalarExpression E>
GradientVector hvp(const E& expr, std::span<const Tensor> params, const GradientVector& v,
                   HvpMode mode = HvpMode::exact) {
  if (mode == HvpMode::finite_difference) return hvp_finite_difference(expr, params, v);
  if constexpr (TwiceDifferentiableExpression<E>) {
    return gradient_and_hvp(expr, params, v).hvp;
  } else {
    throw InvalidInput("hvp: exact mode needs an expression that also evaluates on dual numbers");
  }
}

}  // namespace dgrl::ad
