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
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "dgrl/autodiff/tensor.hpp"
#include "dgrl/data/dataset.hpp"
#include "dgrl/errors.hpp"

namespace dgrl {

// Fraction of samples whose predicted label equals y. `predict` maps an
// n x d feature tensor to n labels.
template <class Predict>
double accuracy(Predict&& predict, std::span<const Sample> samples, std::size_t dim) {
  if (samples.empty()) throw InvalidInput("accuracy: empty dataset");
  const std::vector<int> pred = predict(features_of(samples, dim));
  if (pred.size() != samples.size()) throw ShapeMismatch("accuracy: prediction count differs");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) correct += pred[i] == samples[i].y;
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

inline double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (truth.empty()) throw InvalidInput("accuracy: empty dataset");
  if (predicted.size() != truth.size()) throw ShapeMismatch("accuracy: prediction count differs");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += predicted[i] == truth[i];
  return static_cast<double>(correct) / static_cast<double>(truth.size());
}

// Hubert-Arabie adjusted Rand index between two labelings of the same items.
inline double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw ShapeMismatch("ARI: labelings differ in length");
  const double n = static_cast<double>(a.size());
  if (a.size() < 2) return 1.0;
  std::map<std::pair<int, int>, double> cont;
  std::map<int, double> ra, rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cont[{a[i], b[i]}] += 1;
    ra[a[i]] += 1;
    rb[b[i]] += 1;
  }
  auto c2 = [](double x) { return x * (x - 1) / 2.0; };
  double sum_ij = 0, sum_a = 0, sum_b = 0;
  for (auto& [k, v] : cont) sum_ij += c2(v);
  for (auto& [k, v] : ra) sum_a += c2(v);
  for (auto& [k, v] : rb) sum_b += c2(v);
  const double expected = sum_a * sum_b / c2(n);
  const double max_index = 0.5 * (sum_a + sum_b);
  if (max_index == expected) return 1.0;  // both labelings trivial
  return (sum_ij - expected) / (max_index - expected);
}

// Held-out source accuracies at one training checkpoint.
struct CheckpointRecord {
  int index = 0;
  int iteration = 0;
  std::vector<std::vector<double>> member_domain_acc;  // M x K
  std::vector<double> ensemble_domain_acc;             // K

  void validate() const {
    const std::size_t k = ensemble_domain_acc.size();
    for (const auto& row : member_domain_acc)
      if (row.size() != k) throw ShapeMismatch("checkpoint: member row width differs from K");
    auto in_range = [](double v) { return v >= 0.0 && v <= 1.0; };
    for (const auto& row : member_domain_acc)
      if (!std::all_of(row.begin(), row.end(), in_range))
        throw InvalidInput("checkpoint: accuracy outside [0, 1]");
    if (!std::all_of(ensemble_domain_acc.begin(), ensemble_domain_acc.end(), in_range))
      throw InvalidInput("checkpoint: accuracy outside [0, 1]");
  }

  double member_mean() const {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& row : member_domain_acc)
      for (double v : row) s += v, ++n;
    return n ? s / static_cast<double>(n) : 0.0;
  }

  double ensemble_mean() const {
    double s = 0.0;
    for (double v : ensemble_domain_acc) s += v;
    return ensemble_domain_acc.empty() ? 0.0 : s / static_cast<double>(ensemble_domain_acc.size());
  }
};

enum class SelectionStrategy { overall_avg, overall_ens };

inline const char* to_string(SelectionStrategy s) {
  return s == SelectionStrategy::overall_avg ? "overall_avg" : "overall_ens";
}

inline SelectionStrategy selection_from_string(const std::string& s) {
  if (s == "overall_avg") return SelectionStrategy::overall_avg;
  if (s == "overall_ens") return SelectionStrategy::overall_ens;
  throw InvalidInput("unknown selection strategy '" + s + "'");
}

namespace detail {
template <class Score>
int select_by(std::span<const CheckpointRecord> history, Score score) {
  if (history.empty()) throw InvalidInput("selection: empty history");
  std::size_t best = 0;
  double best_score = score(history[0]);
  for (std::size_t c = 1; c < history.size(); ++c) {
    const double s = score(history[c]);
    if (s > best_score) best = c, best_score = s;  // strict: ties keep the earliest
  }
  return history[best].index;
}
}  // namespace detail

// argmax_c of the mean member accuracy over all (member, domain) pairs.
inline int select_overall_avg(std::span<const CheckpointRecord> history) {
  return detail::select_by(history, [](const CheckpointRecord& r) { return r.member_mean(); });
}

// argmax_c of the mean ensemble accuracy over domains.
inline int select_overall_ens(std::span<const CheckpointRecord> history) {
  return detail::select_by(history, [](const CheckpointRecord& r) { return r.ensemble_mean(); });
}

inline int select_checkpoint(std::span<const CheckpointRecord> history, SelectionStrategy s) {
  return s == SelectionStrategy::overall_avg ? select_overall_avg(history)
                                             : select_overall_ens(history);
}

inline nlohmann::json to_json(const CheckpointRecord& r) {
  return {{"index", r.index},
          {"iteration", r.iteration},
          {"member_domain_acc", r.member_domain_acc},
          {"ensemble_domain_acc", r.ensemble_domain_acc},
          {"member_mean", r.member_mean()},
          {"ensemble_mean", r.ensemble_mean()}};
}

inline CheckpointRecord checkpoint_from_json(const nlohmann::json& j) {
  CheckpointRecord r;
  r.index = j.at("index").get<int>();
  r.iteration = j.at("iteration").get<int>();
  r.member_domain_acc = j.at("member_domain_acc").get<std::vector<std::vector<double>>>();
  r.ensemble_domain_acc = j.at("ensemble_domain_acc").get<std::vector<double>>();
  return r;
}

// Chosen checkpoint per strategy plus the full history table.
inline nlohmann::json selection_report(std::span<const CheckpointRecord> history) {
  nlohmann::json table = nlohmann::json::array();
  for (const auto& r : history) table.push_back(to_json(r));
  return {{"overall_avg", select_overall_avg(history)},
          {"overall_ens", select_overall_ens(history)},
          {"history", table}};
}

}  // namespace dgrl
