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
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "dgrl/data/generators.hpp"
#include "dgrl/data/jsonl.hpp"
#include "dgrl/errors.hpp"
#include "dgrl/eval/metrics.hpp"
#include "dgrl/models/checkpoint.hpp"
#include "dgrl/train/dreame.hpp"
#include "dgrl/train/erm.hpp"
#include "dgrl/train/group_dro.hpp"

namespace dgrl {

using nlohmann::json;

enum class Method { erm, groupdro, groupdro_pp, dreame };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::erm: return "erm";
    case Method::groupdro: return "groupdro";
    case Method::groupdro_pp: return "groupdro_pp";
    case Method::dreame: return "dreame";
  }
  return "";
}

inline Method method_from_string(const std::string& s) {
  if (s == "erm") return Method::erm;
  if (s == "groupdro") return Method::groupdro;
  if (s == "groupdro_pp") return Method::groupdro_pp;
  if (s == "dreame") return Method::dreame;
  throw InvalidInput("unknown method '" + s + "'");
}

namespace detail {

inline void require_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw InvalidInput(where + ": expected a JSON object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw InvalidInput(where + ": unknown key '" + k + "'");
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw InvalidInput(where + "." + key + ": wrong type");
  }
}

}  // namespace detail

// Architecture: only hidden_dims and activation matter; the data fixes the rest.
inline MLPSpec arch_from_json(const json& j, MLPSpec base = {}) {
  detail::require_keys(j, {"hidden_dims", "activation", "input_dim", "num_classes"}, "arch");
  detail::read(j, "hidden_dims", base.hidden_dims, "arch");
  if (j.contains("activation")) base.activation = activation_from_string(j.at("activation").get<std::string>());
  return base;
}

// ------------------------------------------------------------------ dataset

struct DatasetSpec {
  std::string generator = "rotated_moons";  // rotated_moons | latent_group_blobs | jsonl
  std::uint64_t seed = 0;
  // rotated_moons
  int num_domains = 4;
  std::vector<double> angles{0.0, 30.0, 60.0, 90.0};
  std::size_t n_per_domain = 200;
  double noise_sd = 0.1;
  // latent_group_blobs
  int true_groups = 4;
  int declared_domains = 4;
  std::size_t n = 2000;
  double separation = 6.0;
  bool shuffle_declared = true;
  BlobOptions blob;
  // jsonl
  std::string path;
};

inline DatasetSpec dataset_spec_from_json(const json& j) {
  detail::require_keys(j,
                       {"generator", "seed", "num_domains", "angles", "n_per_domain", "noise_sd",
                        "true_groups", "declared_domains", "n", "separation", "shuffle_declared",
                        "dim", "within_sd", "group_weights", "path"},
                       "dataset");
  DatasetSpec d;
  const std::string w = "dataset";
  detail::read(j, "generator", d.generator, w);
  detail::read(j, "seed", d.seed, w);
  detail::read(j, "num_domains", d.num_domains, w);
  detail::read(j, "angles", d.angles, w);
  if (j.contains("num_domains") && !j.contains("angles")) {
    d.angles.clear();
    for (int k = 0; k < d.num_domains; ++k) d.angles.push_back(30.0 * k);
  }
  if (j.contains("angles") && !j.contains("num_domains")) d.num_domains = static_cast<int>(d.angles.size());
  detail::read(j, "n_per_domain", d.n_per_domain, w);
  detail::read(j, "noise_sd", d.noise_sd, w);
  detail::read(j, "true_groups", d.true_groups, w);
  detail::read(j, "declared_domains", d.declared_domains, w);
  detail::read(j, "n", d.n, w);
  detail::read(j, "separation", d.separation, w);
  detail::read(j, "shuffle_declared", d.shuffle_declared, w);
  detail::read(j, "dim", d.blob.dim, w);
  detail::read(j, "within_sd", d.blob.within_sd, w);
  detail::read(j, "group_weights", d.blob.group_weights, w);
  detail::read(j, "path", d.path, w);
  if (d.generator != "rotated_moons" && d.generator != "latent_group_blobs" && d.generator != "jsonl")
    throw InvalidInput("dataset.generator: unknown generator '" + d.generator + "'");
  if (d.generator == "jsonl" && d.path.empty()) throw InvalidInput("dataset.path: required for jsonl");
  return d;
}

inline Dataset make_dataset(const DatasetSpec& d) {
  if (d.generator == "rotated_moons")
    return generate_rotated_moons(d.num_domains, d.angles, d.n_per_domain, d.noise_sd, d.seed);
  if (d.generator == "latent_group_blobs")
    return generate_latent_group_blobs(d.true_groups, d.declared_domains, d.n, d.separation,
                                       d.shuffle_declared, d.seed, d.blob);
  return load_jsonl(d.path);
}

// ---------------------------------------------------------- method configs

inline void read_optimizer(const json& j, const char* kind_key, OptimizerConfig& opt,
                           const std::string& where) {
  if (j.contains(kind_key)) opt.kind = optimizer_from_string(j.at(kind_key).get<std::string>());
  detail::read(j, "lr", opt.lr, where);
}

inline ErmConfig erm_config_from_json(const json& j, ErmConfig c = {}) {
  detail::require_keys(j, {"arch", "n_iter", "batch_per_domain", "optimizer", "lr", "loss_scaling",
                           "checkpoint_cadence"},
                       "erm");
  if (j.contains("arch")) c.arch = arch_from_json(j.at("arch"), c.arch);
  detail::read(j, "n_iter", c.n_iter, "erm");
  detail::read(j, "batch_per_domain", c.batch_per_domain, "erm");
  read_optimizer(j, "optimizer", c.optimizer, "erm");
  if (j.contains("loss_scaling")) {
    const auto s = j.at("loss_scaling").get<std::string>();
    if (s != "mean" && s != "sum") throw InvalidInput("erm.loss_scaling: expected mean or sum");
    c.scaling = s == "mean" ? LossScaling::mean : LossScaling::sum;
  }
  detail::read(j, "checkpoint_cadence", c.checkpoint_cadence, "erm");
  return c;
}

inline DROConfig dro_config_from_json(const json& j, DroMode mode, DROConfig c = {}) {
  const std::string w = mode == DroMode::vanilla ? "groupdro" : "groupdro_pp";
  detail::require_keys(j, {"arch", "mode", "lambda_reg", "gamma", "eta_q", "T", "n_iter", "M_groups",
                           "optimizer", "lr", "batch_per_domain", "reduction", "reset_q_on_relabel",
                           "checkpoint_cadence"},
                       w);
  c.mode = mode;
  if (j.contains("mode") && j.at("mode").get<std::string>() != to_string(mode))
    throw InvalidInput(w + ".mode: does not match the method");
  if (j.contains("arch")) c.arch = arch_from_json(j.at("arch"), c.arch);
  detail::read(j, "lambda_reg", c.lambda_reg, w);
  detail::read(j, "gamma", c.gamma, w);
  detail::read(j, "eta_q", c.eta_q, w);
  detail::read(j, "T", c.T, w);
  detail::read(j, "n_iter", c.n_iter, w);
  detail::read(j, "M_groups", c.M_groups, w);
  read_optimizer(j, "optimizer", c.optimizer, w);
  detail::read(j, "batch_per_domain", c.batch_per_domain, w);
  if (j.contains("reduction")) {
    const auto s = j.at("reduction").get<std::string>();
    if (s != "mean" && s != "sum") throw InvalidInput(w + ".reduction: expected mean or sum");
    c.reduction = s == "mean" ? GroupLossReduction::mean : GroupLossReduction::sum;
  }
  detail::read(j, "reset_q_on_relabel", c.reset_q_on_relabel, w);
  detail::read(j, "checkpoint_cadence", c.checkpoint_cadence, w);
  c.validate();
  return c;
}

inline DreameConfig dreame_config_from_json(const json& j, DreameConfig c = {}) {
  const std::string w = "dreame";
  detail::require_keys(j, {"arch", "M", "alpha", "lambda_outer", "outer_optimizer", "eta", "mrs",
                           "meta_gradient", "n_iter", "batch_per_domain", "augment",
                           "meta_batch_mean", "averaging", "checkpoint_cadence"},
                       w);
  if (j.contains("arch")) c.arch = arch_from_json(j.at("arch"), c.arch);
  detail::read(j, "M", c.M, w);
  detail::read(j, "alpha", c.alpha, w);
  detail::read(j, "lambda_outer", c.outer.lr, w);
  if (j.contains("outer_optimizer"))
    c.outer.kind = optimizer_from_string(j.at("outer_optimizer").get<std::string>());
  detail::read(j, "eta", c.eta, w);
  if (j.contains("mrs")) c.mrs = mrs_from_string(j.at("mrs").get<std::string>());
  if (j.contains("meta_gradient"))
    c.meta_gradient = meta_gradient_from_string(j.at("meta_gradient").get<std::string>());
  detail::read(j, "n_iter", c.n_iter, w);
  detail::read(j, "batch_per_domain", c.batch_per_domain, w);
  if (j.contains("augment")) {
    c.augment.clear();
    for (const auto& t : j.at("augment")) c.augment.push_back(augment_from_json(t));
  }
  detail::read(j, "meta_batch_mean", c.meta_batch_mean, w);
  if (j.contains("averaging")) {
    const auto s = j.at("averaging").get<std::string>();
    if (s != "probabilities" && s != "logits")
      throw InvalidInput("dreame.averaging: expected probabilities or logits");
    c.averaging = s == "probabilities" ? Averaging::probabilities : Averaging::logits;
  }
  detail::read(j, "checkpoint_cadence", c.checkpoint_cadence, w);
  c.validate();
  return c;
}

// --------------------------------------------------------------- experiment

struct ExperimentConfig {
  json raw;  // the document as given, echoed into every artifact
  DatasetSpec dataset;
  std::vector<Method> methods{Method::erm};
  ErmConfig erm;
  DROConfig groupdro;
  DROConfig groupdro_pp;
  DreameConfig dreame;
  std::vector<std::uint64_t> seeds{0};
  std::vector<int> test_domains;   // empty: every domain in turn
  std::vector<int> train_domains;  // fixed split; empty: all others
  SelectionStrategy selection = SelectionStrategy::overall_avg;
  std::string output = "runs";
  int parallelism = 1;

  // Folds as (test domain, training domains).
  std::vector<std::pair<int, std::vector<int>>> folds(int num_domains) const {
    std::vector<int> tests = test_domains;
    if (tests.empty())
      for (int k = 0; k < num_domains; ++k) tests.push_back(k);
    std::vector<std::pair<int, std::vector<int>>> out;
    for (int t : tests) {
      if (t < 0 || t >= num_domains)
        throw InvalidInput("test_domain: " + std::to_string(t) + " outside [0, " +
                           std::to_string(num_domains) + ")");
      std::vector<int> train = train_domains;
      if (train.empty())
        for (int k = 0; k < num_domains; ++k)
          if (k != t) train.push_back(k);
      for (int k : train)
        if (k == t) throw InvalidInput("fixed_split: test domain also listed for training");
      out.emplace_back(t, std::move(train));
    }
    return out;
  }
};

inline ExperimentConfig experiment_from_json(const json& j) {
  detail::require_keys(j, {"dataset", "method", "methods", "arch", "erm", "groupdro", "groupdro_pp",
                           "dreame", "seeds", "test_domain", "fixed_split", "checkpoint_cadence",
                           "selection", "output", "parallelism", "description", "notes"},
                       "config");
  ExperimentConfig c;
  c.raw = j;
  if (j.contains("dataset")) c.dataset = dataset_spec_from_json(j.at("dataset"));
  if (j.contains("method") && j.contains("methods"))
    throw InvalidInput("config: give either method or methods, not both");
  if (j.contains("method")) c.methods = {method_from_string(j.at("method").get<std::string>())};
  if (j.contains("methods")) {
    c.methods.clear();
    for (const auto& m : j.at("methods")) c.methods.push_back(method_from_string(m.get<std::string>()));
    if (c.methods.empty()) throw InvalidInput("config.methods: empty");
  }
  if (j.contains("arch")) {
    const MLPSpec a = arch_from_json(j.at("arch"));
    c.erm.arch = c.groupdro.arch = c.groupdro_pp.arch = c.dreame.arch = a;
  }
  if (j.contains("checkpoint_cadence")) {
    const int cad = j.at("checkpoint_cadence").get<int>();
    c.erm.checkpoint_cadence = c.groupdro.checkpoint_cadence = c.groupdro_pp.checkpoint_cadence =
        c.dreame.checkpoint_cadence = cad;
  }
  c.groupdro.mode = DroMode::vanilla;
  if (j.contains("erm")) c.erm = erm_config_from_json(j.at("erm"), c.erm);
  if (j.contains("groupdro")) c.groupdro = dro_config_from_json(j.at("groupdro"), DroMode::vanilla, c.groupdro);
  if (j.contains("groupdro_pp"))
    c.groupdro_pp = dro_config_from_json(j.at("groupdro_pp"), DroMode::groupdro_pp, c.groupdro_pp);
  if (j.contains("dreame")) c.dreame = dreame_config_from_json(j.at("dreame"), c.dreame);
  if (j.contains("seeds")) {
    c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (c.seeds.empty()) throw InvalidInput("config.seeds: must not be empty");
  }
  if (j.contains("test_domain")) {
    const json& t = j.at("test_domain");
    if (t.is_string()) {
      if (t.get<std::string>() != "all") throw InvalidInput("config.test_domain: expected \"all\" or an index");
    } else if (t.is_array()) {
      c.test_domains = t.get<std::vector<int>>();
    } else {
      c.test_domains = {t.get<int>()};
    }
  }
  if (j.contains("fixed_split")) {
    const json& f = j.at("fixed_split");
    detail::require_keys(f, {"train", "test"}, "fixed_split");
    c.train_domains = f.at("train").get<std::vector<int>>();
    c.test_domains = f.at("test").get<std::vector<int>>();
    if (c.train_domains.empty() || c.test_domains.empty())
      throw InvalidInput("fixed_split: train and test lists must be nonempty");
  }
  if (j.contains("selection")) c.selection = selection_from_string(j.at("selection").get<std::string>());
  detail::read(j, "output", c.output, "config");
  detail::read(j, "parallelism", c.parallelism, "config");
  if (c.parallelism < 1) throw InvalidInput("config.parallelism: must be >= 1");
  return c;
}

inline json load_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InvalidInput("cannot open '" + path + "'");
  try {
    return json::parse(is);
  } catch (const json::parse_error& e) {
    throw InvalidInput("'" + path + "': " + e.what());
  }
}

// Effective configuration of one method, as recorded in run files.
inline json method_config_json(const ExperimentConfig& c, Method m) {
  switch (m) {
    case Method::erm: return to_json(c.erm);
    case Method::groupdro: return to_json(c.groupdro);
    case Method::groupdro_pp: return to_json(c.groupdro_pp);
    case Method::dreame: return to_json(c.dreame);
  }
  return {};
}

}  // namespace dgrl
