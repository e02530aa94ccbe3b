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
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "dgrl/autodiff/gradient.hpp"
#include "dgrl/autodiff/ops.hpp"
#include "dgrl/data/dataset.hpp"
#include "dgrl/errors.hpp"
#include "dgrl/eval/metrics.hpp"
#include "dgrl/models/checkpoint.hpp"
#include "dgrl/models/mlp.hpp"
#include "dgrl/random.hpp"
#include "dgrl/train/erm.hpp"
#include "dgrl/train/kmeans.hpp"
#include "dgrl/train/optimizer.hpp"
#include "dgrl/train/run_record.hpp"

namespace dgrl {

// Adaptive group weights q on the probability simplex.
struct GroupWeights {
  std::vector<double> q;
  double eta_q = 0.2;

  static GroupWeights uniform(int groups, double eta_q) {
    if (groups < 1) throw InvalidInput("group weights: need at least one group");
    return {std::vector<double>(static_cast<std::size_t>(groups), 1.0 / groups), eta_q};
  }
  int size() const { return static_cast<int>(q.size()); }
};

// q_k <- q_k exp(eta_q * loss_k), renormalized. The exponent is shifted by the
// largest loss first, which cancels in the normalization. Weights that would
// underflow are held at the smallest normal double so every q_k stays > 0.
inline GroupWeights update_group_weights(GroupWeights gw, std::span<const double> group_loss) {
  if (group_loss.size() != gw.q.size())
    throw ShapeMismatch("update_group_weights: " + std::to_string(group_loss.size()) +
                        " losses for " + std::to_string(gw.q.size()) + " groups");
  double top = 0.0;
  for (double l : group_loss) {
    if (!std::isfinite(l) || l < 0.0) throw NumericFault("update_group_weights: loss must be finite and >= 0");
    top = std::max(top, l);
  }
  double total = 0.0;
  for (std::size_t k = 0; k < gw.q.size(); ++k) {
    gw.q[k] *= std::exp(gw.eta_q * (group_loss[k] - top));
    total += gw.q[k];
  }
  for (double& v : gw.q) v = std::max(v / total, std::numeric_limits<double>::min());
  return gw;
}

// Mean loss of each group present in the batch; absent groups report 0.
inline std::vector<double> per_group_mean_loss(std::span<const double> losses,
                                               std::span<const int> groups, int num_groups) {
  std::vector<double> sum(static_cast<std::size_t>(num_groups), 0.0);
  std::vector<std::size_t> cnt(sum.size(), 0);
  for (std::size_t i = 0; i < losses.size(); ++i) {
    const int g = groups[i];
    if (g < 0 || g >= num_groups)
      throw InvalidInput("group id " + std::to_string(g) + " outside [0, " +
                         std::to_string(num_groups) + ")");
    sum[static_cast<std::size_t>(g)] += losses[i];
    ++cnt[static_cast<std::size_t>(g)];
  }
  for (std::size_t k = 0; k < sum.size(); ++k)
    if (cnt[k]) sum[k] /= static_cast<double>(cnt[k]);
  return sum;
}

// How the group term L aggregates within a group.
enum class GroupLossReduction { sum, mean };

inline const char* to_string(GroupLossReduction r) {
  return r == GroupLossReduction::sum ? "sum" : "mean";
}

struct DroObjectiveValue {
  double L = 0.0;
  double R = 0.0;
  double objective = 0.0;
};

// Weighted objective L + lambda * R over a labelled batch with group ids:
//   L = sum_k q_k * sum_{i in k} loss_i     (or per-group mean with `mean`)
//   R = sum_i q_{g_i}^gamma * loss_i
// Implemented as one weighted sum, w_i = qL_i + lambda * q_{g_i}^gamma.
struct GroupDroObjective {
  const MLPSpec* spec;
  const Tensor* features;
  std::span<const int> labels;
  std::span<const int> groups;
  std::vector<double> q;
  double gamma = 0.3;
  double lambda_reg = 0.1;
  GroupLossReduction reduction = GroupLossReduction::sum;

  void validate() const {
    if (labels.empty()) throw InvalidInput("group DRO objective: empty batch");
    if (groups.size() != labels.size()) throw ShapeMismatch("group DRO objective: one group id per sample");
    const int m = static_cast<int>(q.size());
    for (int g : groups)
      if (g < 0 || g >= m)
        throw InvalidInput("group id " + std::to_string(g) + " outside [0, " + std::to_string(m) + ")");
    double s = 0.0;
    for (double v : q) s += v;
    if (std::abs(s - 1.0) > 1e-9) throw InvalidInput("group DRO objective: q is not on the simplex");
  }

  std::vector<double> group_term_weights() const {
    std::vector<double> w(labels.size());
    std::vector<std::size_t> cnt(q.size(), 0);
    for (int g : groups) ++cnt[static_cast<std::size_t>(g)];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const auto g = static_cast<std::size_t>(groups[i]);
      w[i] = reduction == GroupLossReduction::sum ? q[g]
                                                  : q[g] * (1.0 / static_cast<double>(cnt[g]));
    }
    return w;
  }

  std::vector<double> regularizer_weights() const {
    std::vector<double> w(labels.size());
    for (std::size_t i = 0; i < w.size(); ++i)
      w[i] = std::pow(q[static_cast<std::size_t>(groups[i])], gamma);
    return w;
  }

  Tensor combined_weights() const {
    const auto wl = group_term_weights();
    const auto wr = regularizer_weights();
    Tensor w(Shape{labels.size()});
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = wl[i] + lambda_reg * wr[i];
    return w;
  }

  DroObjectiveValue components(std::span<const double> losses) const {
    const auto wl = group_term_weights();
    const auto wr = regularizer_weights();
    DroObjectiveValue v;
    for (std::size_t i = 0; i < losses.size(); ++i) {
      v.L += wl[i] * losses[i];
      v.R += wr[i] * losses[i];
    }
    v.objective = v.L + lambda_reg * v.R;
    return v;
  }

  template <class T>
  ad::Var<T> weighted(ad::Var<T> per_sample_loss) const {
    return ad::sum(ad::scale(per_sample_loss, combined_weights()));
  }

  template <class T>
  ad::Var<T> operator()(ad::Tape<T>& tape, std::span<const ad::Var<T>> params) const {
    validate();
    return weighted(
        per_sample_cross_entropy(mlp_logits(*spec, params, tape.constant(*features)), labels));
  }
};

// Renames cluster ids so that they overlap the previous ids as much as
// possible (greedy on the contingency table, ties to the lowest ids).
inline std::vector<int> align_labels(std::span<const int> labels, std::span<const int> previous,
                                     int num_groups) {
  if (labels.size() != previous.size()) throw ShapeMismatch("align_labels: length mismatch");
  const auto G = static_cast<std::size_t>(num_groups);
  std::vector<std::size_t> overlap(G * G, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto a = static_cast<std::size_t>(labels[i]), b = static_cast<std::size_t>(previous[i]);
    if (a < G && b < G) ++overlap[a * G + b];
  }
  std::vector<int> rename(G, -1);
  std::vector<bool> taken(G, false);
  for (std::size_t round = 0; round < G; ++round) {
    std::size_t best_a = G, best_b = G;
    for (std::size_t a = 0; a < G; ++a) {
      if (rename[a] >= 0) continue;
      for (std::size_t b = 0; b < G; ++b) {
        if (taken[b]) continue;
        if (best_a == G || overlap[a * G + b] > overlap[best_a * G + best_b]) {
          best_a = a;
          best_b = b;
        }
      }
    }
    rename[best_a] = static_cast<int>(best_b);
    taken[best_b] = true;
  }
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = rename[static_cast<std::size_t>(labels[i])];
  return out;
}

// Replaces the group id of every training sample with its k-means cluster in
// the feature space h of `params`. Cluster ids are aligned with the current
// group ids so that per-group state can carry over. Meta-validation and
// held-out samples are not touched. Returns the new labels in all_train()
// order.
inline std::vector<int> relabel_groups(DomainSplit& split, const MLPParams& params, int num_groups,
                                       std::uint64_t seed) {
  const std::vector<std::size_t> train = split.all_train();
  const std::vector<Sample> samples = split.gather(train);
  const Tensor Z = forward_features(params, features_of(samples, split.dim));
  std::vector<int> previous;
  for (const auto& s : samples) previous.push_back(s.group_id);
  std::vector<int> labels = align_labels(kmeans_cluster(Z, num_groups, seed), previous, num_groups);
  for (std::size_t i = 0; i < train.size(); ++i) split.pool[train[i]].group_id = labels[i];
  return labels;
}

enum class DroMode { vanilla, groupdro_pp };

inline const char* to_string(DroMode m) { return m == DroMode::vanilla ? "groupdro" : "groupdro_pp"; }

struct DROConfig {
  MLPSpec arch;
  DroMode mode = DroMode::groupdro_pp;
  double lambda_reg = 0.1;
  double gamma = 0.3;
  double eta_q = 0.2;
  int T = 50;          // optimizer steps between relabelings
  int n_iter = 600;    // total optimizer steps
  int M_groups = 4;
  OptimizerConfig optimizer{OptimizerKind::adam, 1e-3};
  std::size_t batch_per_domain = 32;
  // Unset: sum for GroupDRO++, per-group mean for vanilla.
  std::optional<GroupLossReduction> reduction;
  bool reset_q_on_relabel = false;
  int checkpoint_cadence = 50;

  GroupLossReduction effective_reduction() const {
    if (reduction) return *reduction;
    return mode == DroMode::vanilla ? GroupLossReduction::mean : GroupLossReduction::sum;
  }

  void validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidInput("DRO: gamma must be in (0, 1)");
    if (T < 1) throw InvalidInput("DRO: T must be >= 1");
    if (M_groups < 1) throw InvalidInput("DRO: M_groups must be >= 1");
    if (n_iter < 1) throw InvalidInput("DRO: n_iter must be >= 1");
    if (!(eta_q >= 0.0)) throw InvalidInput("DRO: eta_q must be >= 0");
  }
};

inline nlohmann::json to_json(const DROConfig& c) {
  return {{"arch", spec_to_json(c.arch)},
          {"mode", to_string(c.mode)},
          {"lambda_reg", c.lambda_reg},
          {"gamma", c.gamma},
          {"eta_q", c.eta_q},
          {"T", c.T},
          {"n_iter", c.n_iter},
          {"M_groups", c.M_groups},
          {"optimizer", to_string(c.optimizer.kind)},
          {"lr", c.optimizer.lr},
          {"batch_per_domain", c.batch_per_domain},
          {"reduction", to_string(c.effective_reduction())},
          {"reset_q_on_relabel", c.reset_q_on_relabel},
          {"checkpoint_cadence", c.checkpoint_cadence}};
}

struct DroStepResult {
  double mean_loss = 0.0;
  DroObjectiveValue value;
};

// One step of the weighted objective: per-sample losses at the current
// parameters update q from per-group means, then the weighted objective
// with the new q is differentiated and applied.
inline DroStepResult dro_step(MLPParams& params, const Batch& batch, GroupWeights& gw,
                              const DROConfig& cfg, Optimizer& opt) {
  const Tensor X = batch.features(params.spec.input_dim);
  const std::vector<int> y = batch.labels();
  std::vector<int> g;
  for (const auto& s : batch.samples) g.push_back(s.group_id);

  ad::Tape<double> tape;
  std::vector<ad::Var<double>> leaves;
  for (const auto& t : params.tensors) leaves.push_back(tape.leaf(t));
  auto losses = per_sample_cross_entropy(
      mlp_logits(params.spec, std::span<const ad::Var<double>>(leaves), tape.constant(X)),
      std::span<const int>(y));
  const std::vector<double> lv = losses.value().data();
  gw = update_group_weights(std::move(gw), per_group_mean_loss(lv, g, gw.size()));

  const bool vanilla = cfg.mode == DroMode::vanilla;
  GroupDroObjective obj{&params.spec, &X, y, g, gw.q, cfg.gamma,
                        vanilla ? 0.0 : cfg.lambda_reg, cfg.effective_reduction()};
  obj.validate();
  tape.backward(obj.weighted(losses));
  std::vector<Tensor> grads;
  for (const auto& l : leaves) grads.push_back(l.grad());
  opt.step(params.tensors, ad::GradientVector(std::move(grads)));

  DroStepResult r;
  for (double l : lv) r.mean_loss += l;
  r.mean_loss /= static_cast<double>(lv.size());
  r.value = obj.components(lv);
  return r;
}

// Vanilla GroupDRO (declared groups, no regularizer, per-group means) or
// GroupDRO++ (k-means relabeling every T steps, q^gamma regularizer).
// group_id values in `split` are updated in place by relabeling.
inline TrainedModel train_groupdro(DomainSplit& split, const DROConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const bool vanilla = cfg.mode == DroMode::vanilla;
  const int declared = static_cast<int>(split.num_domains());
  const int groups = vanilla ? declared : cfg.M_groups;
  for (auto& s : split.pool) s.group_id %= groups;

  MLPParams params = init_mlp(spec_for(split, cfg.arch), member_seed(seed, 0));
  Optimizer opt(cfg.optimizer);
  GroupWeights gw = GroupWeights::uniform(groups, cfg.eta_q);
  DomainBatchSampler sampler(split, DomainBatchSampler::Source::train,
                             derive_seed(seed, {stream::kBatches}));

  RunRecord rec;
  rec.method = to_string(cfg.mode);
  rec.config = to_json(cfg);
  rec.seed = seed;
  rec.loss_scaling = to_string(cfg.effective_reduction());
  double window_loss = 0.0;
  int window = 0;
  int phase = 0;
  for (int it = 1; it <= cfg.n_iter; ++it) {
    window_loss += dro_step(params, sampler.pooled(cfg.batch_per_domain), gw, cfg, opt).mean_loss;
    ++window;
    if (!vanilla && it % cfg.T == 0 && it < cfg.n_iter) {
      const auto labels =
          relabel_groups(split, params, cfg.M_groups, derive_seed(seed, {stream::kCluster, static_cast<std::uint64_t>(phase++)}));
      std::vector<int> declared_ids;
      for (std::size_t i : split.all_train()) declared_ids.push_back(split.pool[i].domain_id);
      rec.relabel_iterations.push_back(it);
      rec.relabel_ari_vs_declared.push_back(adjusted_rand_index(labels, declared_ids));
      if (cfg.reset_q_on_relabel) gw = GroupWeights::uniform(groups, cfg.eta_q);
    }
    if (is_checkpoint_step(it, cfg.n_iter, cfg.checkpoint_cadence)) {
      Ensemble e{params.spec, {params}};
      rec.checkpoints.push_back(
          evaluate_checkpoint(e, split, static_cast<int>(rec.checkpoints.size()), it));
      rec.snapshots.push_back({params});
      rec.q_history.push_back(gw.q);
      rec.train_loss.push_back(window_loss / window);
      window_loss = 0.0;
      window = 0;
    }
  }
  return {std::move(params), std::move(rec)};
}

}  // namespace dgrl
