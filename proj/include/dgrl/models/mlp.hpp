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

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dgrl/autodiff/gradient.hpp"
#include "dgrl/autodiff/ops.hpp"
#include "dgrl/autodiff/tensor.hpp"
#include "dgrl/errors.hpp"
#include "dgrl/random.hpp"

namespace dgrl {

enum class Activation { relu, tanh };

inline const char* to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw InvalidInput("unknown activation '" + s + "'");
}

// Multilayer perceptron f = c o h: every layer but the last is the feature
// extractor h, the last linear layer is the classifier c.
struct MLPSpec {
  std::size_t input_dim = 2;
  std::vector<std::size_t> hidden_dims{32, 16};
  std::size_t num_classes = 2;
  Activation activation = Activation::relu;

  // Trainers require a non-trivial h. Hand-built linear nets (no hidden
  // layer) are still accepted by the forward passes.
  void validate() const {
    if (input_dim == 0) throw InvalidInput("MLPSpec: input_dim must be positive");
    if (num_classes < 2) throw InvalidInput("MLPSpec: num_classes must be >= 2");
    if (hidden_dims.empty()) throw InvalidInput("MLPSpec: at least one hidden layer is required");
    for (std::size_t h : hidden_dims)
      if (h == 0) throw InvalidInput("MLPSpec: hidden dims must be positive");
  }

  std::size_t num_layers() const { return hidden_dims.size() + 1; }
  std::size_t feature_dim() const { return hidden_dims.empty() ? input_dim : hidden_dims.back(); }

  // [W0, b0, W1, b1, ...]; W_l is (out x in).
  std::vector<Shape> param_shapes() const {
    std::vector<Shape> shapes;
    std::size_t in = input_dim;
    for (std::size_t l = 0; l < num_layers(); ++l) {
      const std::size_t out = l < hidden_dims.size() ? hidden_dims[l] : num_classes;
      shapes.push_back({out, in});
      shapes.push_back({out});
      in = out;
    }
    return shapes;
  }

  std::size_t num_params() const {
    std::size_t n = 0;
    for (const auto& s : param_shapes()) n += shape_size(s);
    return n;
  }

  friend bool operator==(const MLPSpec&, const MLPSpec&) = default;
};

struct MLPParams {
  MLPSpec spec;
  std::vector<Tensor> tensors;

  const Tensor& weight(std::size_t layer) const { return tensors[2 * layer]; }
  const Tensor& bias(std::size_t layer) const { return tensors[2 * layer + 1]; }
  Tensor& weight(std::size_t layer) { return tensors[2 * layer]; }
  Tensor& bias(std::size_t layer) { return tensors[2 * layer + 1]; }

  std::span<const Tensor> view() const { return tensors; }

  void check_consistent() const {
    const auto shapes = spec.param_shapes();
    if (shapes.size() != tensors.size())
      throw ShapeMismatch("MLPParams: expected " + std::to_string(shapes.size()) + " tensors, got " +
                          std::to_string(tensors.size()));
    for (std::size_t i = 0; i < shapes.size(); ++i)
      if (shapes[i] != tensors[i].shape())
        throw ShapeMismatch("MLPParams: tensor " + std::to_string(i) + " has shape " +
                            shape_string(tensors[i].shape()) + ", expected " +
                            shape_string(shapes[i]));
  }

  friend bool operator==(const MLPParams&, const MLPParams&) = default;
};

// Fan-in scaled normal weights (He for ReLU, LeCun for tanh), zero biases.
inline MLPParams init_mlp(const MLPSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(derive_seed(seed, {stream::kInit}));
  MLPParams p{spec, {}};
  for (const auto& shape : spec.param_shapes()) {
    Tensor t(shape);
    if (shape.size() == 2) {
      const double gain = spec.activation == Activation::relu ? 2.0 : 1.0;
      std::normal_distribution<double> normal(0.0, std::sqrt(gain / static_cast<double>(shape[1])));
      for (auto& v : t.data()) v = normal(rng);
    }
    p.tensors.push_back(std::move(t));
  }
  return p;
}

template <class T>
ad::Var<T> activate(ad::Var<T> x, Activation a) {
  return a == Activation::relu ? ad::relu(x) : ad::tanh(x);
}

template <class T>
ad::Var<T> linear(ad::Var<T> x, ad::Var<T> weight, ad::Var<T> bias) {
  return ad::add_row(ad::matmul(x, weight, /*transpose_b=*/true), bias);
}

// h(x): activations of the last hidden layer.
template <class T>
ad::Var<T> mlp_features(const MLPSpec& spec, std::span<const ad::Var<T>> params, ad::Var<T> x) {
  if (x.value().rank() != 2 || x.value().cols() != spec.input_dim) {
    throw ShapeMismatch("mlp: input has shape " + shape_string(x.shape()) + ", expected n x " +
                        std::to_string(spec.input_dim));
  }
  for (std::size_t l = 0; l + 1 < spec.num_layers(); ++l)
    x = activate(linear(x, params[2 * l], params[2 * l + 1]), spec.activation);
  return x;
}

// c(z): the final linear layer.
template <class T>
ad::Var<T> mlp_classifier(const MLPSpec& spec, std::span<const ad::Var<T>> params, ad::Var<T> z) {
  const std::size_t last = spec.num_layers() - 1;
  return linear(z, params[2 * last], params[2 * last + 1]);
}

template <class T>
ad::Var<T> mlp_logits(const MLPSpec& spec, std::span<const ad::Var<T>> params, ad::Var<T> x) {
  return mlp_classifier(spec, params, mlp_features(spec, params, x));
}

// Per-sample cross-entropy, shape [n].
template <class T>
ad::Var<T> per_sample_cross_entropy(ad::Var<T> logits, std::span<const int> labels) {
  return ad::nll(ad::log_softmax(logits), labels);
}

template <class T>
ad::Var<T> cross_entropy(ad::Var<T> logits, std::span<const int> labels) {
  if (labels.empty()) throw InvalidInput("cross_entropy: empty batch");
  return ad::mean(per_sample_cross_entropy(logits, labels));
}

// Mean cross-entropy of an MLP on fixed data, as a differentiable expression
// of the parameters. Holds references: X and labels must outlive it.
struct MeanCrossEntropy {
  const MLPSpec* spec;
  const Tensor* features;
  std::span<const int> labels;

  template <class T>
  ad::Var<T> operator()(ad::Tape<T>& tape, std::span<const ad::Var<T>> params) const {
    return cross_entropy(mlp_logits(*spec, params, tape.constant(*features)), labels);
  }
};

// Summed cross-entropy (no 1/n).
struct SumCrossEntropy {
  const MLPSpec* spec;
  const Tensor* features;
  std::span<const int> labels;

  template <class T>
  ad::Var<T> operator()(ad::Tape<T>& tape, std::span<const ad::Var<T>> params) const {
    if (labels.empty()) throw InvalidInput("cross_entropy: empty batch");
    return ad::sum(
        per_sample_cross_entropy(mlp_logits(*spec, params, tape.constant(*features)), labels));
  }
};

namespace detail {
template <class F>
Tensor run_forward(const MLPParams& params, const Tensor& X, F&& f) {
  params.check_consistent();
  ad::Tape<double> tape;
  std::vector<ad::Var<double>> leaves;
  for (const auto& t : params.tensors) leaves.push_back(tape.leaf(t, false));
  return f(std::span<const ad::Var<double>>(leaves), tape.constant(X)).value();
}
}  // namespace detail

inline Tensor forward_features(const MLPParams& params, const Tensor& X) {
  return detail::run_forward(params, X, [&](auto leaves, auto x) {
    return mlp_features(params.spec, leaves, x);
  });
}

inline Tensor forward_logits(const MLPParams& params, const Tensor& X) {
  return detail::run_forward(params, X, [&](auto leaves, auto x) {
    return mlp_logits(params.spec, leaves, x);
  });
}

// Per-sample cross-entropy values without building gradients.
inline std::vector<double> per_sample_losses(const MLPParams& params, const Tensor& X,
                                             std::span<const int> labels) {
  return detail::run_forward(params, X, [&](auto leaves, auto x) {
           return per_sample_cross_entropy(mlp_logits(params.spec, leaves, x), labels);
         })
      .data();
}

// Row-wise softmax.
inline Tensor softmax(const Tensor& logits) {
  Tensor out(logits.shape());
  const std::size_t n = logits.rows(), c = logits.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double mx = logits.at(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, logits.at(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += (out.at(i, j) = std::exp(logits.at(i, j) - mx));
    for (std::size_t j = 0; j < c; ++j) out.at(i, j) /= s;
  }
  return out;
}

// Row argmax; ties go to the lowest index.
inline std::vector<int> argmax_rows(const Tensor& scores) {
  std::vector<int> out(scores.rows());
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < scores.cols(); ++j)
      if (scores.at(i, j) > scores.at(i, best)) best = j;
    out[i] = static_cast<int>(best);
  }
  return out;
}

inline std::vector<int> predict(const MLPParams& params, const Tensor& X) {
  return argmax_rows(forward_logits(params, X));
}

}  // namespace dgrl
