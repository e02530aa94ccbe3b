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

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "dgrl/autodiff/gradient.hpp"
#include "dgrl/data/dataset.hpp"
#include "dgrl/errors.hpp"
#include "dgrl/models/checkpoint.hpp"
#include "dgrl/models/mlp.hpp"
#include "dgrl/random.hpp"
#include "dgrl/train/optimizer.hpp"
#include "dgrl/train/run_record.hpp"

namespace dgrl {

enum class LossScaling { mean, sum };

inline const char* to_string(LossScaling s) { return s == LossScaling::mean ? "mean" : "sum"; }

// Initialization seed of ensemble member m (ERM and DRO models are member 0).
inline std::uint64_t member_seed(std::uint64_t seed, std::size_t m) {
  return derive_seed(seed, {0x3E3B, m});
}

// The data-dependent parts of an architecture come from the split.
inline MLPSpec spec_for(const DomainSplit& split, MLPSpec arch) {
  arch.input_dim = split.dim;
  arch.num_classes = static_cast<std::size_t>(split.num_classes);
  return arch;
}

struct ErmConfig {
  MLPSpec arch;  // input_dim / num_classes are taken from the data
  int n_iter = 600;
  std::size_t batch_per_domain = 32;
  OptimizerConfig optimizer{OptimizerKind::adam, 1e-3};
  LossScaling scaling = LossScaling::mean;
  int checkpoint_cadence = 50;
};

inline nlohmann::json to_json(const ErmConfig& c) {
  return {{"arch", spec_to_json(c.arch)},
          {"n_iter", c.n_iter},
          {"batch_per_domain", c.batch_per_domain},
          {"optimizer", to_string(c.optimizer.kind)},
          {"lr", c.optimizer.lr},
          {"loss_scaling", to_string(c.scaling)},
          {"checkpoint_cadence", c.checkpoint_cadence}};
}

// One optimizer step on the batch's cross-entropy; domain and group ids are
// ignored. Returns the loss before the step.
inline double erm_step(MLPParams& params, const Tensor& X, std::span<const int> y,
                       Optimizer& opt, LossScaling scaling = LossScaling::mean) {
  if (y.empty()) throw InvalidInput("erm_step: empty batch");
  ad::ValueAndGradient vg;
  if (scaling == LossScaling::mean)
    vg = ad::value_and_gradient(MeanCrossEntropy{&params.spec, &X, y}, params.view());
  else
    vg = ad::value_and_gradient(SumCrossEntropy{&params.spec, &X, y}, params.view());
  opt.step(params.tensors, vg.gradient);
  return vg.value;
}

inline double erm_step(MLPParams& params, const Batch& batch, Optimizer& opt,
                       LossScaling scaling = LossScaling::mean) {
  const Tensor X = batch.features(params.spec.input_dim);
  const std::vector<int> y = batch.labels();
  return erm_step(params, X, y, opt, scaling);
}

struct TrainedModel {
  MLPParams params;
  RunRecord record;
};

// Pooled-data ERM. `member` selects which ensemble member's initialization to
// use, so an ERM run can shadow any DReaME member.
inline TrainedModel train_erm(const DomainSplit& split, const ErmConfig& cfg, std::uint64_t seed,
                              std::size_t member = 0) {
  if (cfg.n_iter < 1) throw InvalidInput("erm: n_iter must be >= 1");
  MLPParams params = init_mlp(spec_for(split, cfg.arch), member_seed(seed, member));
  Optimizer opt(cfg.optimizer);
  DomainBatchSampler sampler(split, DomainBatchSampler::Source::train,
                             derive_seed(seed, {stream::kBatches}));
  RunRecord rec;
  rec.method = "erm";
  rec.config = to_json(cfg);
  rec.seed = seed;
  rec.loss_scaling = to_string(cfg.scaling);
  double window_loss = 0.0;
  int window = 0;
  for (int it = 1; it <= cfg.n_iter; ++it) {
    window_loss += erm_step(params, sampler.pooled(cfg.batch_per_domain), opt, cfg.scaling);
    ++window;
    if (is_checkpoint_step(it, cfg.n_iter, cfg.checkpoint_cadence)) {
      Ensemble e{params.spec, {params}};
      rec.checkpoints.push_back(
          evaluate_checkpoint(e, split, static_cast<int>(rec.checkpoints.size()), it));
      rec.snapshots.push_back({params});
      rec.train_loss.push_back(window_loss / window);
      window_loss = 0.0;
      window = 0;
    }
  }
  return {std::move(params), std::move(rec)};
}

}  // namespace dgrl
