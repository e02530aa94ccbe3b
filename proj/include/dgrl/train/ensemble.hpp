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
#include <string>
#include <vector>

#include "dgrl/autodiff/tensor.hpp"
#include "dgrl/errors.hpp"
#include "dgrl/models/mlp.hpp"

namespace dgrl {

struct Ensemble {
  MLPSpec spec;
  std::vector<MLPParams> members;

  std::size_t size() const { return members.size(); }
};

enum class Averaging { probabilities, logits };

inline const char* to_string(Averaging a) {
  return a == Averaging::probabilities ? "probabilities" : "logits";
}

struct EnsemblePrediction {
  Tensor probabilities;     // n x C
  std::vector<int> labels;  // argmax, ties to the lowest class
};

// Unweighted average of member softmax outputs (or of logits, then softmax).
inline EnsemblePrediction ensemble_predict(const Ensemble& ens, const Tensor& X,
                                           Averaging averaging = Averaging::probabilities) {
  if (ens.members.empty()) throw InvalidInput("ensemble_predict: empty ensemble");
  const double inv = 1.0 / static_cast<double>(ens.members.size());
  Tensor acc;
  for (std::size_t m = 0; m < ens.members.size(); ++m) {
    Tensor out = forward_logits(ens.members[m], X);
    if (averaging == Averaging::probabilities) out = softmax(out);
    if (m == 0) {
      acc = Tensor(out.shape());
    }
    for (std::size_t i = 0; i < out.size(); ++i) acc[i] += out[i];
  }
  for (auto& v : acc.data()) v *= inv;
  if (averaging == Averaging::logits) acc = softmax(acc);
  EnsemblePrediction p;
  p.labels = argmax_rows(acc);
  p.probabilities = std::move(acc);
  return p;
}

}  // namespace dgrl
