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
#include <string>
#include <vector>

#include "dgrl/autodiff/gradient.hpp"
#include "dgrl/autodiff/tensor.hpp"
#include "dgrl/errors.hpp"

namespace dgrl {

enum class OptimizerKind { sgd, adam };

inline const char* to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

inline OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw InvalidInput("unknown optimizer '" + s + "'");
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Plain SGD or Adam over a parameter list. State is created on first step.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg = {}) : cfg_(cfg) {
    if (!(cfg_.lr >= 0.0)) throw InvalidInput("optimizer: learning rate must be >= 0");
  }

  const OptimizerConfig& config() const { return cfg_; }
  long steps() const { return t_; }

  void step(std::vector<Tensor>& params, const ad::GradientVector& g) {
    if (!g.same_layout(params)) throw ShapeMismatch("optimizer: gradient layout differs from params");
    ++t_;
    if (cfg_.kind == OptimizerKind::sgd) {
      for (std::size_t s = 0; s < params.size(); ++s)
        for (std::size_t i = 0; i < params[s].size(); ++i) params[s][i] -= cfg_.lr * g[s][i];
      return;
    }
    if (m_.num_segments() == 0) {
      m_ = ad::GradientVector::zeros_like(params);
      v_ = ad::GradientVector::zeros_like(params);
    }
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t s = 0; s < params.size(); ++s)
      for (std::size_t i = 0; i < params[s].size(); ++i) {
        const double gi = g[s][i];
        double& m = m_[s][i];
        double& v = v_[s][i];
        m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * gi;
        v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * gi * gi;
        params[s][i] -= cfg_.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg_.eps);
      }
  }

 private:
  OptimizerConfig cfg_;
  long t_ = 0;
  ad::GradientVector m_, v_;
};

}  // namespace dgrl
