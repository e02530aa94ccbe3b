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
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "dgrl/autodiff/gradient.hpp"
#include "dgrl/autodiff/ops.hpp"
#include "dgrl/data/augment.hpp"
#include "dgrl/data/dataset.hpp"
#include "dgrl/errors.hpp"
#include "dgrl/models/checkpoint.hpp"
#include "dgrl/models/mlp.hpp"
#include "dgrl/random.hpp"
#include "dgrl/train/ensemble.hpp"
#include "dgrl/train/erm.hpp"
#include "dgrl/train/optimizer.hpp"
#include "dgrl/train/run_record.hpp"

namespace dgrl {

enum class MrsStrategy { random, all_to_all, loss_based, gradient_matching };

inline const char* to_string(MrsStrategy s) {
  switch (s) {
    case MrsStrategy::random: return "random";
    case MrsStrategy::all_to_all: return "all_to_all";
    case MrsStrategy::loss_based: return "loss_based";
    case MrsStrategy::gradient_matching: return "gradient_matching";
  }
  return "";
}

inline MrsStrategy mrs_from_string(const std::string& s) {
  if (s == "random") return MrsStrategy::random;
  if (s == "all_to_all") return MrsStrategy::all_to_all;
  if (s == "loss_based") return MrsStrategy::loss_based;
  if (s == "gradient_matching") return MrsStrategy::gradient_matching;
  throw InvalidInput("unknown MRS strategy '" + s + "'");
}

// How dG/dtheta is formed: through the inner step with an exact or
// finite-difference Hessian-vector product, or first-order (grad at theta').
enum class MetaGradientMode { exact, finite_difference, first_order };

inline const char* to_string(MetaGradientMode m) {
  switch (m) {
    case MetaGradientMode::exact: return "exact";
    case MetaGradientMode::finite_difference: return "finite_difference";
    case MetaGradientMode::first_order: return "first_order";
  }
  return "";
}

inline MetaGradientMode meta_gradient_from_string(const std::string& s) {
  if (s == "exact") return MetaGradientMode::exact;
  if (s == "finite_difference") return MetaGradientMode::finite_difference;
  if (s == "first_order") return MetaGradientMode::first_order;
  throw InvalidInput("unknown meta-gradient mode '" + s + "'");
}

// A batch in tensor form, kept alive for expressions that point into it.
struct BatchData {
  Tensor X;
  std::vector<int> y;
  BatchOrigin origin;

  static BatchData from(const Batch& b, std::size_t dim) {
    if (b.empty()) throw InvalidInput("batch: empty");
    return {b.features(dim), b.labels(), b.origin};
  }
  std::size_t size() const { return y.size(); }
};

// Sum of per-sample cross-entropy over several batches, optionally divided
// by the number of batches.
struct MetaValidationLoss {
  const MLPSpec* spec;
  std::vector<const BatchData*> batches;
  bool batch_mean = false;

  template <class T>
  ad::Var<T> operator()(ad::Tape<T>& tape, std::span<const ad::Var<T>> params) const {
    if (batches.empty()) throw InvalidInput("meta-validation loss: no batches");
    ad::Var<T> total;
    for (std::size_t j = 0; j < batches.size(); ++j) {
      const BatchData& b = *batches[j];
      auto s = ad::sum(per_sample_cross_entropy(mlp_logits(*spec, params, tape.constant(b.X)),
                                                std::span<const int>(b.y)));
      total = j == 0 ? s : ad::add(total, s);
    }
    if (batch_mean) total = ad::scale(total, 1.0 / static_cast<double>(batches.size()));
    return total;
  }
};

struct InnerStep {
  MLPParams theta_prime;
  ad::GradientVector grad_L;  // at the pre-update parameters
  double loss_L = 0.0;
  double alpha = 0.0;
};

inline MeanCrossEntropy pooled_loss(const MLPParams& member, const BatchData& pooled) {
  return MeanCrossEntropy{&member.spec, &pooled.X, pooled.y};
}

inline MLPParams gradient_step(const MLPParams& p, const ad::GradientVector& g, double alpha) {
  MLPParams out = p;
  for (std::size_t s = 0; s < out.tensors.size(); ++s)
    for (std::size_t i = 0; i < out.tensors[s].size(); ++i) out.tensors[s][i] -= alpha * g[s][i];
  return out;
}

// theta' = theta - alpha * grad L(theta) with L the mean loss on the pooled
// batch. Always plain gradient descent.
inline InnerStep inner_update(const MLPParams& member, const BatchData& pooled, double alpha) {
  if (!(alpha >= 0.0)) throw InvalidInput("inner_update: alpha must be >= 0");
  ad::ValueAndGradient vg = ad::value_and_gradient(pooled_loss(member, pooled), member.view());
  MLPParams prime = gradient_step(member, vg.gradient, alpha);
  return {std::move(prime), std::move(vg.gradient), vg.value, alpha};
}

struct MRSMatrix {
  Tensor beta;  // batches x members
  MrsStrategy strategy = MrsStrategy::gradient_matching;

  std::size_t num_batches() const { return beta.rows(); }
  std::size_t num_members() const { return beta.cols(); }
};

// beta[k][m]: relevance of validation batch k to member m, every score taken
// at the member's current parameters.
inline MRSMatrix compute_mrs(const std::vector<MLPParams>& members,
                             const std::vector<InnerStep>& inner,
                             const std::vector<BatchData>& validation, MrsStrategy strategy,
                             Rng& rng) {
  if (members.empty()) throw InvalidInput("mrs: empty ensemble");
  if (inner.size() != members.size()) throw ShapeMismatch("mrs: one inner step per member");
  if (validation.empty()) throw InvalidInput("mrs: no validation batches");
  for (const auto& v : validation)
    if (v.y.empty()) throw InvalidInput("mrs: empty validation batch");
  const std::size_t K = validation.size(), M = members.size();
  MRSMatrix out{Tensor(Shape{K, M}), strategy};
  switch (strategy) {
    case MrsStrategy::random: {
      std::uniform_int_distribution<std::size_t> pick(0, M - 1);
      for (std::size_t k = 0; k < K; ++k) out.beta.at(k, pick(rng)) = 1.0;
      break;
    }
    case MrsStrategy::all_to_all:
      for (auto& v : out.beta.data()) v = 1.0;
      break;
    case MrsStrategy::loss_based:
      for (std::size_t k = 0; k < K; ++k)
        for (std::size_t m = 0; m < M; ++m)
          out.beta.at(k, m) =
              1.0 - ad::evaluate(pooled_loss(members[m], validation[k]), members[m].view());
      break;
    case MrsStrategy::gradient_matching:
      for (std::size_t k = 0; k < K; ++k)
        for (std::size_t m = 0; m < M; ++m)
          out.beta.at(k, m) = ad::grad_dot(
              inner[m].grad_L, ad::gradient(pooled_loss(members[m], validation[k]), members[m].view()));
      break;
  }
  for (double v : out.beta.data())
    if (!std::isfinite(v)) throw NumericFault("mrs: non-finite relevance score");
  return out;
}

struct AssignmentSets {
  std::vector<std::vector<int>> gamma;  // batch indices per member
  bool all_to_all = false;

  // Owner of each batch, or -1 when every member received it.
  std::vector<int> owners(std::size_t num_batches) const {
    std::vector<int> out(num_batches, -1);
    if (all_to_all) return out;
    for (std::size_t m = 0; m < gamma.size(); ++m)
      for (int k : gamma[m]) out[static_cast<std::size_t>(k)] = static_cast<int>(m);
    return out;
  }

  bool is_partition(std::size_t num_batches) const {
    std::vector<int> seen(num_batches, 0);
    for (const auto& g : gamma)
      for (int k : g) {
        if (k < 0 || static_cast<std::size_t>(k) >= num_batches) return false;
        ++seen[static_cast<std::size_t>(k)];
      }
    for (int c : seen)
      if (c != 1) return false;
    return true;
  }
};

// Row-wise argmax, ties to the lowest member; all_to_all gives every member
// every batch.
inline AssignmentSets assign_batches(const MRSMatrix& mrs) {
  const std::size_t K = mrs.num_batches(), M = mrs.num_members();
  if (M == 0) throw InvalidInput("assign_batches: no members");
  AssignmentSets out;
  out.gamma.assign(M, {});
  if (mrs.strategy == MrsStrategy::all_to_all) {
    out.all_to_all = true;
    for (auto& g : out.gamma)
      for (std::size_t k = 0; k < K; ++k) g.push_back(static_cast<int>(k));
    return out;
  }
  for (std::size_t k = 0; k < K; ++k) {
    std::size_t best = 0;
    for (std::size_t m = 1; m < M; ++m)
      if (mrs.beta.at(k, m) > mrs.beta.at(k, best)) best = m;
    out.gamma[best].push_back(static_cast<int>(k));
  }
  return out;
}

// d/dtheta [L(theta) + eta * G(theta')] with theta' = theta - alpha * g_L:
//   g_L + eta * (I - alpha * H_L) grad G(theta')
// first_order drops the Hessian term.
template <ad::ScalarExpression LExpr, ad::ScalarExpression GExpr>
ad::GradientVector meta_gradient_from_parts(const LExpr& L, std::span<const Tensor> theta,
                                            const ad::GradientVector& grad_L,
                                            std::span<const Tensor> theta_prime, const GExpr& G,
                                            double alpha, double eta, MetaGradientMode mode) {
  ad::GradientVector d = ad::gradient(G, theta_prime);
  if (mode != MetaGradientMode::first_order) {
    const ad::HvpMode hm =
        mode == MetaGradientMode::exact ? ad::HvpMode::exact : ad::HvpMode::finite_difference;
    d.axpy(-alpha, ad::hvp(L, theta, d, hm));
  }
  ad::GradientVector out = grad_L;
  out.axpy(eta, d);
  return out;
}

template <ad::ScalarExpression LExpr, ad::ScalarExpression GExpr>
ad::GradientVector composite_meta_gradient(const LExpr& L, const GExpr& G,
                                           std::span<const Tensor> theta, double alpha, double eta,
                                           MetaGradientMode mode = MetaGradientMode::exact) {
  const ad::GradientVector gL = ad::gradient(L, theta);
  std::vector<Tensor> prime(theta.begin(), theta.end());
  for (std::size_t s = 0; s < prime.size(); ++s)
    for (std::size_t i = 0; i < prime[s].size(); ++i) prime[s][i] -= alpha * gL[s][i];
  return meta_gradient_from_parts(L, theta, gL, std::span<const Tensor>(prime), G, alpha, eta, mode);
}

struct DreameConfig {
  MLPSpec arch;
  int M = 3;
  double alpha = 0.01;                                    // inner step, plain SGD
  OptimizerConfig outer{OptimizerKind::adam, 1e-3};       // lr is lambda_outer
  double eta = 1.0;
  MrsStrategy mrs = MrsStrategy::gradient_matching;
  MetaGradientMode meta_gradient = MetaGradientMode::exact;
  int n_iter = 600;
  std::size_t batch_per_domain = 32;
  AugmentSpec augment;
  bool meta_batch_mean = false;  // divide G by the number of assigned batches
  Averaging averaging = Averaging::probabilities;
  int checkpoint_cadence = 50;

  double lambda_outer() const { return outer.lr; }

  void validate() const {
    if (M < 1) throw InvalidInput("DReaME: M must be >= 1");
    if (!(alpha > 0.0)) throw InvalidInput("DReaME: alpha must be > 0");
    if (!(outer.lr > 0.0)) throw InvalidInput("DReaME: lambda_outer must be > 0");
    if (!(eta >= 0.0)) throw InvalidInput("DReaME: eta must be >= 0");
    if (n_iter < 1) throw InvalidInput("DReaME: n_iter must be >= 1");
    for (const auto& t : augment) t.validate();
  }
};

inline nlohmann::json to_json(const DreameConfig& c) {
  nlohmann::json aug = nlohmann::json::array();
  for (const auto& t : c.augment) aug.push_back(to_json(t));
  return {{"arch", spec_to_json(c.arch)},
          {"M", c.M},
          {"alpha", c.alpha},
          {"lambda_outer", c.outer.lr},
          {"outer_optimizer", to_string(c.outer.kind)},
          {"eta", c.eta},
          {"mrs", to_string(c.mrs)},
          {"meta_gradient", to_string(c.meta_gradient)},
          {"n_iter", c.n_iter},
          {"batch_per_domain", c.batch_per_domain},
          {"augment", aug},
          {"meta_batch_mean", c.meta_batch_mean},
          {"averaging", to_string(c.averaging)},
          {"checkpoint_cadence", c.checkpoint_cadence}};
}

// Outer update of one member. With eta = 0 or no assigned batches this is
// exactly the optimizer step on grad L.
inline void meta_objective_and_update(MLPParams& member, const InnerStep& inner,
                                      const BatchData& pooled,
                                      const std::vector<const BatchData*>& assigned,
                                      const DreameConfig& cfg, Optimizer& opt) {
  if (!inner.grad_L.same_layout(member.tensors) ||
      gradient_step(member, inner.grad_L, inner.alpha).tensors != inner.theta_prime.tensors)
    throw InvalidInput("meta update: theta' was not produced from these parameters");
  if (cfg.eta == 0.0 || assigned.empty()) {
    opt.step(member.tensors, inner.grad_L);
    return;
  }
  MetaValidationLoss G{&member.spec, assigned, cfg.meta_batch_mean};
  ad::GradientVector g =
      meta_gradient_from_parts(pooled_loss(member, pooled), member.view(), inner.grad_L,
                               inner.theta_prime.view(), G, inner.alpha, cfg.eta, cfg.meta_gradient);
  opt.step(member.tensors, g);
}

struct TrainedEnsemble {
  Ensemble ensemble;
  RunRecord record;
};

// Called once per iteration after assignment, before the outer updates.
using DreameObserver =
    std::function<void(int iteration, const std::vector<BatchData>& validation,
                       const MRSMatrix& mrs, const AssignmentSets& sets)>;

inline Ensemble init_ensemble(const MLPSpec& spec, int M, std::uint64_t seed) {
  Ensemble e{spec, {}};
  for (int m = 0; m < M; ++m) e.members.push_back(init_mlp(spec, member_seed(seed, static_cast<std::size_t>(m))));
  return e;
}

// `initial`, when given, replaces the seeded initialization (it must have
// cfg.M members matching the data).
inline TrainedEnsemble train_dreame(const DomainSplit& split, const DreameConfig& cfg,
                                    std::uint64_t seed, const DreameObserver& observer = {},
                                    const Ensemble* initial = nullptr) {
  cfg.validate();
  Ensemble ens = initial ? *initial : init_ensemble(spec_for(split, cfg.arch), cfg.M, seed);
  if (ens.size() != static_cast<std::size_t>(cfg.M))
    throw InvalidInput("DReaME: initial ensemble has " + std::to_string(ens.size()) + " members, M is " +
                       std::to_string(cfg.M));
  for (const auto& m : ens.members) m.check_consistent();
  std::vector<Optimizer> opts(static_cast<std::size_t>(cfg.M), Optimizer(cfg.outer));
  DomainBatchSampler train(split, DomainBatchSampler::Source::train,
                           derive_seed(seed, {stream::kBatches}));
  DomainBatchSampler meta_val(split, DomainBatchSampler::Source::meta_validation,
                              derive_seed(seed, {stream::kMetaValidation}));
  Rng aug_rng(derive_seed(seed, {stream::kAugment}));
  Rng mrs_rng(derive_seed(seed, {stream::kMrs}));

  RunRecord rec;
  rec.method = "dreame";
  rec.config = to_json(cfg);
  rec.seed = seed;
  rec.hvp_mode = to_string(cfg.meta_gradient);
  rec.loss_scaling = cfg.meta_batch_mean ? "batch_mean" : "sum";
  double window_loss = 0.0;
  int window = 0;
  for (int it = 1; it <= cfg.n_iter; ++it) {
    const BatchData pooled = BatchData::from(train.pooled(cfg.batch_per_domain), split.dim);
    std::vector<InnerStep> inner;
    for (const auto& m : ens.members) inner.push_back(inner_update(m, pooled, cfg.alpha));

    std::vector<BatchData> V;
    for (const auto& b :
         augment_meta_validation(meta_val.per_domain(cfg.batch_per_domain), cfg.augment, aug_rng))
      V.push_back(BatchData::from(b, split.dim));
    const MRSMatrix mrs = compute_mrs(ens.members, inner, V, cfg.mrs, mrs_rng);
    const AssignmentSets sets = assign_batches(mrs);
    if (observer) observer(it, V, mrs, sets);
    rec.assignment_history.push_back(sets.owners(V.size()));

    for (std::size_t m = 0; m < ens.members.size(); ++m) {
      std::vector<const BatchData*> assigned;
      for (int k : sets.gamma[m]) assigned.push_back(&V[static_cast<std::size_t>(k)]);
      meta_objective_and_update(ens.members[m], inner[m], pooled, assigned, cfg, opts[m]);
      window_loss += inner[m].loss_L / static_cast<double>(cfg.M);
    }
    ++window;
    if (is_checkpoint_step(it, cfg.n_iter, cfg.checkpoint_cadence)) {
      rec.checkpoints.push_back(evaluate_checkpoint(
          ens, split, static_cast<int>(rec.checkpoints.size()), it, cfg.averaging));
      rec.snapshots.push_back(ens.members);
      rec.train_loss.push_back(window_loss / window);
      window_loss = 0.0;
      window = 0;
    }
  }
  return {std::move(ens), std::move(rec)};
}

}  // namespace dgrl
