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

#include "dgrl/data/dataset.hpp"
#include "dgrl/eval/metrics.hpp"
#include "dgrl/models/mlp.hpp"
#include "dgrl/train/ensemble.hpp"

namespace dgrl {

// Everything a training run leaves behind. Parameter snapshots stay in
// memory; to_json() writes the rest.
struct RunRecord {
  std::string method;
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::string hvp_mode;  // DReaME only: "exact", "finite_difference" or "first_order"
  std::string loss_scaling;

  std::vector<CheckpointRecord> checkpoints;
  std::vector<std::vector<MLPParams>> snapshots;  // [checkpoint][member]
  std::vector<double> train_loss;                 // mean pooled-batch loss per checkpoint window

  // GroupDRO / GroupDRO++
  std::vector<std::vector<double>> q_history;  // q at each checkpoint
  std::vector<int> relabel_iterations;
  std::vector<double> relabel_ari_vs_declared;

  // DReaME: row per iteration, entry per meta-validation batch; the member
  // it was assigned to, or -1 when it went to every member.
  std::vector<std::vector<int>> assignment_history;

  Ensemble ensemble_at(std::size_t checkpoint) const {
    Ensemble e;
    e.members = snapshots.at(checkpoint);
    e.spec = e.members.front().spec;
    return e;
  }

  nlohmann::json to_json() const {
    nlohmann::json cps = nlohmann::json::array();
    for (const auto& c : checkpoints) cps.push_back(dgrl::to_json(c));
    nlohmann::json j{{"method", method},
                     {"config", config},
                     {"seed", seed},
                     {"checkpoints", cps},
                     {"train_loss", train_loss}};
    if (!loss_scaling.empty()) j["loss_scaling"] = loss_scaling;
    if (!hvp_mode.empty()) j["hvp_mode"] = hvp_mode;
    if (!q_history.empty()) j["q_history"] = q_history;
    if (!relabel_iterations.empty()) {
      j["relabel_iterations"] = relabel_iterations;
      j["relabel_ari_vs_declared"] = relabel_ari_vs_declared;
    }
    if (!assignment_history.empty()) j["assignment_history"] = assignment_history;
    if (!checkpoints.empty()) j["selection"] = selection_report(checkpoints);
    return j;
  }
};

// Held-out source accuracy of each member and of the ensemble, per domain.
inline CheckpointRecord evaluate_checkpoint(const Ensemble& ens, const DomainSplit& split,
                                            int index, int iteration,
                                            Averaging averaging = Averaging::probabilities) {
  CheckpointRecord rec;
  rec.index = index;
  rec.iteration = iteration;
  rec.member_domain_acc.assign(ens.size(), {});
  for (const auto& part : split.domains) {
    const std::vector<Sample> held = split.gather(part.held_out);
    const Tensor X = features_of(held, split.dim);
    const std::vector<int> y = labels_of(held);
    for (std::size_t m = 0; m < ens.size(); ++m)
      rec.member_domain_acc[m].push_back(accuracy(predict(ens.members[m], X), y));
    rec.ensemble_domain_acc.push_back(accuracy(ensemble_predict(ens, X, averaging).labels, y));
  }
  rec.validate();
  return rec;
}

inline bool is_checkpoint_step(int iteration, int n_iter, int cadence) {
  return iteration == n_iter || (cadence > 0 && iteration % cadence == 0);
}

}  // namespace dgrl
