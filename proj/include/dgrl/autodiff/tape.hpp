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

#include <cstddef>
#include <functional>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "dgrl/autodiff/dual.hpp"
#include "dgrl/autodiff/tensor.hpp"
#include "dgrl/errors.hpp"

namespace dgrl::ad {

template <class T>
class Tape;

// Handle to a node on a tape. Cheap to copy; only valid while its tape lives.
template <class T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const BasicTensor<T>& value() const { return tape->value(id); }
  const BasicTensor<T>& grad() const { return tape->grad(id); }
  const Shape& shape() const { return value().shape(); }
};

// Linear record of a computation. Nodes are appended in evaluation order and
// reverse-swept by backward(). A tape is single-threaded; independent tapes
// over shared read-only data may run concurrently.
template <class T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t)>;

  struct Node {
    BasicTensor<T> value;
    BasicTensor<T> grad;
    bool needs_grad = false;
    const char* op = "";
    std::vector<std::size_t> inputs;
    Backward backward;
  };

  Tape() { nodes_.reserve(64); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> leaf(BasicTensor<T> value, bool needs_grad = true) {
    return append("leaf", std::move(value), needs_grad, {}, {});
  }

  // Fixed data (features, masks). Never receives a gradient.
  Var<T> constant(const Tensor& value) {
    if constexpr (std::is_same_v<T, double>) {
      return append("constant", value, false, {}, {});
    } else {
      BasicTensor<T> v(value.shape());
      for (std::size_t i = 0; i < value.size(); ++i) v[i] = T(value[i]);
      return append("constant", std::move(v), false, {}, {});
    }
  }

  // Records an operation. The node needs a gradient iff any input does.
  Var<T> push(const char* op, BasicTensor<T> value, std::vector<std::size_t> inputs,
              Backward backward) {
    bool needs = false;
    for (std::size_t in : inputs) needs = needs || nodes_[in].needs_grad;
    return append(op, std::move(value), needs, std::move(inputs), std::move(backward));
  }

  Node& node(std::size_t id) { return nodes_[id]; }
  const Node& node(std::size_t id) const { return nodes_[id]; }
  const BasicTensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  const BasicTensor<T>& grad(std::size_t id) const { return nodes_[id].grad; }
  std::size_t size() const { return nodes_.size(); }

  // Reverse sweep from a scalar root. Gradients of every needs_grad node are
  // overwritten, not accumulated across calls.
  void backward(Var<T> root) {
    if (root.tape != this) throw InvalidInput("backward: root belongs to another tape");
    if (value(root.id).size() != 1) {
      throw ShapeMismatch("backward: root must be scalar, got shape " +
                          shape_string(value(root.id).shape()));
    }
    for (std::size_t i = 0; i <= root.id; ++i) {
      Node& n = nodes_[i];
      if (n.needs_grad) n.grad = BasicTensor<T>(n.value.shape());
    }
    if (!nodes_[root.id].needs_grad) return;
    nodes_[root.id].grad[0] = T(1.0);
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || !n.backward) continue;
      n.backward(*this, i);
      for (std::size_t in : n.inputs) check_grad(in, i);
    }
  }

 private:
  Var<T> append(const char* op, BasicTensor<T> value, bool needs_grad,
                std::vector<std::size_t> inputs, Backward backward) {
    for (std::size_t i = 0; i < value.size(); ++i) {
      if (!is_finite(value[i])) {
        throw NumericFault(std::string("non-finite value in forward pass of '") + op +
                           "' (node " + std::to_string(nodes_.size()) + ")");
      }
    }
    nodes_.push_back(
        Node{std::move(value), {}, needs_grad, op, std::move(inputs), std::move(backward)});
    return Var<T>{this, nodes_.size() - 1};
  }

  void check_grad(std::size_t in, std::size_t from) const {
    const Node& n = nodes_[in];
    if (!n.needs_grad) return;
    for (std::size_t j = 0; j < n.grad.size(); ++j) {
      if (!is_finite(n.grad[j])) {
        throw NumericFault(std::string("non-finite gradient in reverse pass of '") +
                           nodes_[from].op + "' (node " + std::to_string(from) + ")");
      }
    }
  }

  std::vector<Node> nodes_;
};

}  // namespace dgrl::ad
