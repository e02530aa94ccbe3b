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
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dgrl/autodiff/tape.hpp"

// The closed operation set: matmul, add, broadcast row-add, relu, tanh,
// log-softmax, negative log-likelihood, mean, sum and scalar multiply
// (uniform or elementwise by constants). Everything else is built from these.

namespace dgrl::ad {

namespace detail {

template <class T>
void require_same_tape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.tape != b.tape) throw InvalidInput(std::string(op) + ": operands live on different tapes");
}

template <class T>
const BasicTensor<T>& require_matrix(const Var<T>& a, const char* op) {
  const auto& v = a.value();
  if (v.rank() != 2) {
    throw ShapeMismatch(std::string(op) + ": expected a matrix, got " + shape_string(v.shape()));
  }
  return v;
}

}  // namespace detail

// a[n x k] * b[k x m], or a[n x k] * b[m x k]^T when transpose_b is set.
template <class T>
Var<T> matmul(Var<T> a, Var<T> b, bool transpose_b = false) {
  detail::require_same_tape(a, b, "matmul");
  const auto& A = detail::require_matrix(a, "matmul");
  const auto& B = detail::require_matrix(b, "matmul");
  const std::size_t n = A.rows(), k = A.cols();
  const std::size_t bk = transpose_b ? B.cols() : B.rows();
  const std::size_t m = transpose_b ? B.rows() : B.cols();
  if (bk != k) {
    throw ShapeMismatch("matmul: inner dimensions differ, " + shape_string(A.shape()) + " vs " +
                        shape_string(B.shape()) + (transpose_b ? "^T" : ""));
  }
  BasicTensor<T> C(Shape{n, m});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = A[i * k + p];
      if (transpose_b) {
        for (std::size_t j = 0; j < m; ++j) C[i * m + j] += aip * B[j * k + p];
      } else {
        for (std::size_t j = 0; j < m; ++j) C[i * m + j] += aip * B[p * m + j];
      }
    }
  }
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->push("matmul", std::move(C), {ia, ib},
                      [ia, ib, n, k, m, transpose_b](Tape<T>& t, std::size_t self) {
                        const auto& dC = t.grad(self);
                        auto& na = t.node(ia);
                        auto& nb = t.node(ib);
                        if (na.needs_grad) {
                          // dA = dC * B^T  (or dC * B when B was transposed)
                          for (std::size_t i = 0; i < n; ++i)
                            for (std::size_t j = 0; j < m; ++j) {
                              const T g = dC[i * m + j];
                              for (std::size_t p = 0; p < k; ++p)
                                na.grad[i * k + p] +=
                                    g * (transpose_b ? nb.value[j * k + p] : nb.value[p * m + j]);
                            }
                        }
                        if (nb.needs_grad) {
                          for (std::size_t i = 0; i < n; ++i)
                            for (std::size_t p = 0; p < k; ++p) {
                              const T aip = na.value[i * k + p];
                              for (std::size_t j = 0; j < m; ++j) {
                                if (transpose_b)
                                  nb.grad[j * k + p] += dC[i * m + j] * aip;
                                else
                                  nb.grad[p * m + j] += aip * dC[i * m + j];
                              }
                            }
                        }
                      });
}

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::require_same_tape(a, b, "add");
  if (a.shape() != b.shape()) {
    throw ShapeMismatch("add: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  BasicTensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->push("add", std::move(out), {ia, ib}, [ia, ib](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    for (std::size_t in : {ia, ib}) {
      auto& n = t.node(in);
      if (!n.needs_grad) continue;
      for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
    }
  });
}

// a[n x m] + row[m] broadcast over rows.
template <class T>
Var<T> add_row(Var<T> a, Var<T> row) {
  detail::require_same_tape(a, row, "add_row");
  const auto& A = detail::require_matrix(a, "add_row");
  const auto& r = row.value();
  if (r.rank() != 1 || r.size() != A.cols()) {
    throw ShapeMismatch("add_row: row " + shape_string(r.shape()) + " does not broadcast over " +
                        shape_string(A.shape()));
  }
  const std::size_t n = A.rows(), m = A.cols();
  BasicTensor<T> out = A;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] += r[j];
  const std::size_t ia = a.id, ir = row.id;
  return a.tape->push("add_row", std::move(out), {ia, ir},
                      [ia, ir, n, m](Tape<T>& t, std::size_t self) {
                        const auto& g = t.grad(self);
                        auto& na = t.node(ia);
                        auto& nr = t.node(ir);
                        if (na.needs_grad)
                          for (std::size_t i = 0; i < g.size(); ++i) na.grad[i] += g[i];
                        if (nr.needs_grad)
                          for (std::size_t i = 0; i < n; ++i)
                            for (std::size_t j = 0; j < m; ++j) nr.grad[j] += g[i * m + j];
                      });
}

// max(a, 0); the subgradient at exactly 0 is 0.
template <class T>
Var<T> relu(Var<T> a) {
  BasicTensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i)
    if (!(primal(out[i]) > 0.0)) out[i] = T(0.0);
  const std::size_t ia = a.id;
  return a.tape->push("relu", std::move(out), {ia}, [ia](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& na = t.node(ia);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (primal(na.value[i]) > 0.0) na.grad[i] += g[i];
  });
}

template <class T>
Var<T> tanh(Var<T> a) {
  using std::tanh;
  BasicTensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = tanh(out[i]);
  const std::size_t ia = a.id;
  return a.tape->push("tanh", std::move(out), {ia}, [ia](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& y = t.value(self);
    auto& na = t.node(ia);
    for (std::size_t i = 0; i < g.size(); ++i) na.grad[i] += g[i] * (T(1.0) - y[i] * y[i]);
  });
}

// Row-wise log-softmax of a[n x C], shifted by the row max for stability.
template <class T>
Var<T> log_softmax(Var<T> a) {
  using std::exp;
  using std::log;
  const auto& A = detail::require_matrix(a, "log_softmax");
  const std::size_t n = A.rows(), c = A.cols();
  BasicTensor<T> out(A.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = &A[i * c];
    std::size_t arg = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (primal(row[j]) > primal(row[arg])) arg = j;
    const T mx = row[arg];
    T s(0.0);
    for (std::size_t j = 0; j < c; ++j) s += exp(row[j] - mx);
    const T lse = mx + log(s);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = row[j] - lse;
  }
  const std::size_t ia = a.id;
  return a.tape->push("log_softmax", std::move(out), {ia},
                      [ia, n, c](Tape<T>& t, std::size_t self) {
                        using std::exp;
                        const auto& g = t.grad(self);
                        const auto& y = t.value(self);
                        auto& na = t.node(ia);
                        for (std::size_t i = 0; i < n; ++i) {
                          T gs(0.0);
                          for (std::size_t j = 0; j < c; ++j) gs += g[i * c + j];
                          for (std::size_t j = 0; j < c; ++j)
                            na.grad[i * c + j] += g[i * c + j] - exp(y[i * c + j]) * gs;
                        }
                      });
}

// Per-row negative log-likelihood: out[i] = -logp[i, labels[i]].
template <class T>
Var<T> nll(Var<T> logp, std::span<const int> labels) {
  const auto& L = detail::require_matrix(logp, "nll");
  const std::size_t n = L.rows(), c = L.cols();
  if (labels.size() != n) {
    throw ShapeMismatch("nll: " + std::to_string(labels.size()) + " labels for " +
                        std::to_string(n) + " rows");
  }
  std::vector<int> y(labels.begin(), labels.end());
  BasicTensor<T> out(Shape{n});
  for (std::size_t i = 0; i < n; ++i) {
    if (y[i] < 0 || static_cast<std::size_t>(y[i]) >= c) {
      throw InvalidInput("nll: label " + std::to_string(y[i]) + " outside [0, " +
                         std::to_string(c) + ")");
    }
    out[i] = -L[i * c + static_cast<std::size_t>(y[i])];
  }
  const std::size_t il = logp.id;
  return logp.tape->push("nll", std::move(out), {il},
                         [il, c, y = std::move(y)](Tape<T>& t, std::size_t self) {
                           const auto& g = t.grad(self);
                           auto& nl = t.node(il);
                           for (std::size_t i = 0; i < y.size(); ++i)
                             nl.grad[i * c + static_cast<std::size_t>(y[i])] -= g[i];
                         });
}

template <class T>
Var<T> sum(Var<T> a) {
  T s(0.0);
  for (const T& v : a.value().data()) s += v;
  const std::size_t ia = a.id;
  return a.tape->push("sum", BasicTensor<T>::scalar(s), {ia},
                      [ia](Tape<T>& t, std::size_t self) {
                        const T g = t.grad(self)[0];
                        auto& na = t.node(ia);
                        for (std::size_t i = 0; i < na.grad.size(); ++i) na.grad[i] += g;
                      });
}

// Mean over every element. Forward and reverse both multiply by 1/N so that
// a weighted sum with weights 1/N produces bitwise-identical gradients.
template <class T>
Var<T> mean(Var<T> a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw InvalidInput("mean: empty tensor");
  const double inv = 1.0 / static_cast<double>(n);
  T s(0.0);
  for (const T& v : a.value().data()) s += v;
  const std::size_t ia = a.id;
  return a.tape->push("mean", BasicTensor<T>::scalar(s * T(inv)), {ia},
                      [ia, inv](Tape<T>& t, std::size_t self) {
                        const T g = t.grad(self)[0] * T(inv);
                        auto& na = t.node(ia);
                        for (std::size_t i = 0; i < na.grad.size(); ++i) na.grad[i] += g;
                      });
}

template <class T>
Var<T> scale(Var<T> a, double c) {
  BasicTensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= T(c);
  const std::size_t ia = a.id;
  return a.tape->push("scale", std::move(out), {ia}, [ia, c](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& na = t.node(ia);
    for (std::size_t i = 0; i < g.size(); ++i) na.grad[i] += g[i] * T(c);
  });
}

// Elementwise multiply by a same-shape tensor of constants.
template <class T>
Var<T> scale(Var<T> a, const Tensor& weights) {
  if (a.shape() != weights.shape()) {
    throw ShapeMismatch("scale: weights " + shape_string(weights.shape()) + " vs operand " +
                        shape_string(a.shape()));
  }
  BasicTensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= T(weights[i]);
  const std::size_t ia = a.id;
  return a.tape->push("scale", std::move(out), {ia},
                      [ia, w = weights](Tape<T>& t, std::size_t self) {
                        const auto& g = t.grad(self);
                        auto& na = t.node(ia);
                        for (std::size_t i = 0; i < g.size(); ++i) na.grad[i] += g[i] * T(w[i]);
                      });
}

}  // namespace dgrl::ad
