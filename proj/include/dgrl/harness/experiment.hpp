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

#include <atomic>
#include <cstdint>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include "json.hpp"

#include "dgrl/data/dataset.hpp"
#include "dgrl/errors.hpp"
#include "dgrl/eval/metrics.hpp"
#include "dgrl/harness/config.hpp"
#include "dgrl/train/dreame.hpp"
#include "dgrl/train/ensemble.hpp"
#include "dgrl/train/erm.hpp"
#include "dgrl/train/group_dro.hpp"

namespace dgrl {

// Outcome of one (method, fold, seed) job. Failed jobs keep their error and
// carry no accuracies.
struct RunOutcome {
  Method method = Method::erm;
  int test_domain = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::map<SelectionStrategy, double> test_accuracy;
  std::map<SelectionStrategy, int> selected_checkpoint;
  json record;  // RunRecord JSON plus fold metadata

  std::optional<double> accuracy(SelectionStrategy s) const {
    if (!ok) return std::nullopt;
    auto it = test_accuracy.find(s);
    if (it == test_accuracy.end()) return std::nullopt;
    return it->second;
  }

  json to_json() const {
    json j = record.is_object() ? record : json::object();
    j["method"] = to_string(method);
    j["test_domain"] = test_domain;
    j["seed"] = seed;
    j["ok"] = ok;
    if (!ok) j["error"] = error;
    json acc = json::object(), sel = json::object();
    for (const auto& [s, v] : test_accuracy) acc[to_string(s)] = v;
    for (const auto& [s, v] : selected_checkpoint) sel[to_string(s)] = v;
    j["test_accuracy"] = acc;
    j["selected_checkpoint"] = sel;
    return j;
  }
};

inline RunOutcome outcome_from_json(const json& j) {
  RunOutcome r;
  r.method = method_from_string(j.at("method").get<std::string>());
  r.test_domain = j.at("test_domain").get<int>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.ok = j.at("ok").get<bool>();
  r.error = j.value("error", std::string());
  for (const auto& [k, v] : j.at("test_accuracy").items())
    r.test_accuracy[selection_from_string(k)] = v.get<double>();
  const json selected = j.value("selected_checkpoint", json::object());
  for (const auto& [k, v] : selected.items())
    r.selected_checkpoint[selection_from_string(k)] = v.get<int>();
  r.record = j;
  return r;
}

// Throws unless every sample in the split comes from a training domain.
inline void assert_isolated(const DomainSplit& split, const Dataset& data, int test_domain) {
  for (std::size_t i = 0; i < split.pool.size(); ++i) {
    const int d = data.samples.at(split.origin[i]).sample.domain_id;
    if (d == test_domain || split.pool[i].domain_id == test_domain)
      throw Error("isolation violated: test-domain sample " + std::to_string(split.origin[i]) +
                  " entered the training split");
  }
}

inline std::vector<Sample> domain_samples(const Dataset& data, int domain) {
  std::vector<Sample> out;
  for (std::size_t i : data.indices_of_domain(domain)) out.push_back(data.samples[i].sample);
  return out;
}

struct TrainedRun {
  RunRecord record;
  Averaging averaging = Averaging::probabilities;
};

inline TrainedRun train_method(const ExperimentConfig& cfg, Method m, DomainSplit& split,
                               std::uint64_t seed) {
  switch (m) {
    case Method::erm: return {train_erm(split, cfg.erm, seed).record};
    case Method::groupdro: return {train_groupdro(split, cfg.groupdro, seed).record};
    case Method::groupdro_pp: return {train_groupdro(split, cfg.groupdro_pp, seed).record};
    case Method::dreame: return {train_dreame(split, cfg.dreame, seed).record, cfg.dreame.averaging};
  }
  throw InvalidInput("unknown method");
}

// Trains on the fold's source domains, selects checkpoints from held-out
// source accuracy only, then scores the selected model on the test domain.
inline RunOutcome run_single(const Dataset& data, const ExperimentConfig& cfg, Method m,
                             int test_domain, const std::vector<int>& train_domains,
                             std::uint64_t seed) {
  RunOutcome out;
  out.method = m;
  out.test_domain = test_domain;
  out.seed = seed;
  try {
    DomainSplit split = split_domains(data, seed, train_domains);
    assert_isolated(split, data, test_domain);
    TrainedRun run = train_method(cfg, m, split, seed);
    assert_isolated(split, data, test_domain);

    const std::vector<Sample> test = domain_samples(data, test_domain);
    const Tensor X = features_of(test, data.dim);
    const std::vector<int> y = labels_of(test);
    for (SelectionStrategy s : {SelectionStrategy::overall_avg, SelectionStrategy::overall_ens}) {
      const int c = select_checkpoint(run.record.checkpoints, s);
      out.selected_checkpoint[s] = c;
      const Ensemble ens = run.record.ensemble_at(static_cast<std::size_t>(c));
      out.test_accuracy[s] = accuracy(ensemble_predict(ens, X, run.averaging).labels, y);
    }
    out.record = run.record.to_json();
    out.record["train_domains"] = train_domains;
    out.record["experiment"] = cfg.raw;
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
    out.test_accuracy.clear();
    out.selected_checkpoint.clear();
  }
  return out;
}

struct Job {
  Method method;
  int test_domain;
  std::vector<int> train_domains;
  std::uint64_t seed;
};

inline std::vector<Job> plan_jobs(const ExperimentConfig& cfg, int num_domains) {
  if (num_domains < 2) throw InvalidInput("leave-one-out: dataset needs at least 2 domains");
  std::vector<Job> jobs;
  for (Method m : cfg.methods)
    for (const auto& [test, train] : cfg.folds(num_domains))
      for (std::uint64_t s : cfg.seeds) jobs.push_back({m, test, train, s});
  return jobs;
}

// Runs every job with at most cfg.parallelism threads; results come back in
// job order regardless of scheduling. `on_done` is called from worker
// threads, serialized.
template <class OnDone = std::nullptr_t>
std::vector<RunOutcome> run_jobs(const Dataset& data, const ExperimentConfig& cfg,
                                 const std::vector<Job>& jobs, OnDone on_done = nullptr) {
  std::vector<RunOutcome> out(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex done_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const Job& j = jobs[i];
      out[i] = run_single(data, cfg, j.method, j.test_domain, j.train_domains, j.seed);
      if constexpr (!std::is_same_v<OnDone, std::nullptr_t>) {
        std::lock_guard<std::mutex> lock(done_mu);
        on_done(out[i]);
      }
    }
  };
  const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(cfg.parallelism), jobs.size());
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return out;
}

inline std::vector<RunOutcome> run_leave_one_out(const Dataset& data, const ExperimentConfig& cfg) {
  return run_jobs(data, cfg, plan_jobs(cfg, data.num_domains));
}

}  // namespace dgrl
