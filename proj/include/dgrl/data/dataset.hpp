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
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dgrl/autodiff/tensor.hpp"
#include "dgrl/errors.hpp"
#include "dgrl/random.hpp"

namespace dgrl {

// What trainers see of a sample. Generator ground truth lives only in
// LabeledSample and never reaches a DomainSplit.
struct Sample {
  std::vector<double> x;
  int y = 0;
  int domain_id = 0;  // declared domain
  int group_id = 0;   // inferred group; starts as the domain's index in the split

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct LabeledSample {
  Sample sample;
  std::optional<int> latent_group;

  friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

struct Dataset {
  std::vector<LabeledSample> samples;
  int num_domains = 0;
  int num_classes = 2;
  std::size_t dim = 0;

  std::vector<std::size_t> indices_of_domain(int domain) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (samples[i].sample.domain_id == domain) out.push_back(i);
    return out;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

inline Tensor features_of(std::span<const Sample> samples, std::size_t dim) {
  Tensor X(Shape{samples.size(), dim});
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].x.size() != dim)
      throw ShapeMismatch("sample " + std::to_string(i) + " has " +
                          std::to_string(samples[i].x.size()) + " features, expected " +
                          std::to_string(dim));
    std::copy(samples[i].x.begin(), samples[i].x.end(), X.data().begin() + static_cast<std::ptrdiff_t>(i * dim));
  }
  return X;
}

inline std::vector<int> labels_of(std::span<const Sample> samples) {
  std::vector<int> y;
  y.reserve(samples.size());
  for (const auto& s : samples) y.push_back(s.y);
  return y;
}

// Per-domain train / meta-validation / held-out partition. Index lists point
// into `pool`, which holds trainer-visible copies of the included domains.
struct DomainPart {
  int domain_id = 0;
  std::vector<std::size_t> train;
  std::vector<std::size_t> meta_validation;
  std::vector<std::size_t> held_out;
};

struct DomainSplit {
  std::vector<Sample> pool;
  std::vector<std::size_t> origin;  // pool index -> dataset index
  std::vector<DomainPart> domains;
  std::size_t dim = 0;
  int num_classes = 2;

  std::size_t num_domains() const { return domains.size(); }

  std::vector<Sample> gather(std::span<const std::size_t> idx) const {
    std::vector<Sample> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(pool[i]);
    return out;
  }

  std::vector<std::size_t> all_train() const {
    std::vector<std::size_t> out;
    for (const auto& d : domains) out.insert(out.end(), d.train.begin(), d.train.end());
    return out;
  }
  std::vector<std::size_t> all_held_out() const {
    std::vector<std::size_t> out;
    for (const auto& d : domains) out.insert(out.end(), d.held_out.begin(), d.held_out.end());
    return out;
  }
};

struct SplitSizes {
  std::size_t train, meta_validation, held_out;
};

// Nested 80/20 splits; the smaller part takes the floor.
inline SplitSizes split_sizes(std::size_t n) {
  const std::size_t held = n / 5;
  const std::size_t rest = n - held;
  const std::size_t meta = rest / 5;
  return {rest - meta, meta, held};
}

// Splits the listed domains (all when empty). Each domain is shuffled with
// its own stream so its split does not depend on which others are included.
// group_id of every pooled sample is reset to its domain's position in
// `domains`.
inline DomainSplit split_domains(const Dataset& data, std::uint64_t seed,
                                 std::vector<int> domains = {}) {
  if (domains.empty())
    for (int k = 0; k < data.num_domains; ++k) domains.push_back(k);
  DomainSplit split;
  split.dim = data.dim;
  split.num_classes = data.num_classes;
  for (std::size_t local = 0; local < domains.size(); ++local) {
    const int k = domains[local];
    std::vector<std::size_t> idx = data.indices_of_domain(k);
    if (idx.size() < 10)
      throw InvalidInput("split: domain " + std::to_string(k) + " has " +
                         std::to_string(idx.size()) + " samples, need at least 10");
    Rng rng(derive_seed(seed, {stream::kSplit, static_cast<std::uint64_t>(k)}));
    std::shuffle(idx.begin(), idx.end(), rng);
    const SplitSizes sz = split_sizes(idx.size());
    DomainPart part{k, {}, {}, {}};
    for (std::size_t j = 0; j < idx.size(); ++j) {
      Sample s = data.samples[idx[j]].sample;
      s.group_id = static_cast<int>(local);
      split.pool.push_back(std::move(s));
      split.origin.push_back(idx[j]);
      const std::size_t at = split.pool.size() - 1;
      if (j < sz.train)
        part.train.push_back(at);
      else if (j < sz.train + sz.meta_validation)
        part.meta_validation.push_back(at);
      else
        part.held_out.push_back(at);
    }
    split.domains.push_back(std::move(part));
  }
  return split;
}

enum class BatchKind { meta_train_pooled, meta_validation, augmented };

struct BatchOrigin {
  BatchKind kind = BatchKind::meta_train_pooled;
  int source = -1;  // local domain index for validation / augmented batches
  int aug_id = -1;  // index into the augmentation list

  friend bool operator==(const BatchOrigin&, const BatchOrigin&) = default;
};

struct Batch {
  std::vector<Sample> samples;
  BatchOrigin origin;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  Tensor features(std::size_t dim) const { return features_of(samples, dim); }
  std::vector<int> labels() const { return labels_of(samples); }
};

// Draws without replacement within an epoch; when fewer than the requested
// count remain, the list is reshuffled and a new epoch starts.
class EpochSampler {
 public:
  EpochSampler(std::vector<std::size_t> items, std::uint64_t seed)
      : items_(std::move(items)), rng_(seed), cursor_(items_.size()) {}

  std::vector<std::size_t> next(std::size_t n) {
    if (items_.empty()) throw InvalidInput("sampler: nothing to sample from");
    if (n > items_.size())
      throw InvalidInput("sampler: requested " + std::to_string(n) + " of " +
                         std::to_string(items_.size()) + " items");
    if (cursor_ + n > items_.size()) {
      std::shuffle(items_.begin(), items_.end(), rng_);
      cursor_ = 0;
    }
    std::vector<std::size_t> out(items_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                 items_.begin() + static_cast<std::ptrdiff_t>(cursor_ + n));
    cursor_ += n;
    return out;
  }

  std::size_t population() const { return items_.size(); }

 private:
  std::vector<std::size_t> items_;
  Rng rng_;
  std::size_t cursor_;
};

// One sampler per domain over either the train or meta-validation lists.
// Reads group_id at draw time, so relabeling is visible to later batches.
class DomainBatchSampler {
 public:
  enum class Source { train, meta_validation };

  DomainBatchSampler(const DomainSplit& split, Source source, std::uint64_t seed)
      : split_(&split) {
    for (std::size_t k = 0; k < split.num_domains(); ++k) {
      const auto& part = split.domains[k];
      samplers_.emplace_back(source == Source::train ? part.train : part.meta_validation,
                             derive_seed(seed, {k}));
    }
  }

  // Pooled batch with exactly `per_domain` samples from each domain.
  Batch pooled(std::size_t per_domain) {
    if (per_domain == 0) throw InvalidInput("pooled batch: per-domain size must be positive");
    Batch b;
    b.origin = {BatchKind::meta_train_pooled, -1, -1};
    for (auto& s : samplers_) {
      if (s.population() == 0) throw InvalidInput("pooled batch: empty train split");
      for (std::size_t i : s.next(per_domain)) b.samples.push_back(split_->pool[i]);
    }
    return b;
  }

  // One batch per domain, each of min(per_domain, |domain|) samples.
  std::vector<Batch> per_domain(std::size_t per_domain) {
    std::vector<Batch> out;
    for (std::size_t k = 0; k < samplers_.size(); ++k) {
      auto& s = samplers_[k];
      if (s.population() == 0)
        throw InvalidInput("validation batch: domain " + std::to_string(k) + " is empty");
      Batch b;
      b.origin = {BatchKind::meta_validation, static_cast<int>(k), -1};
      for (std::size_t i : s.next(std::min(per_domain, s.population())))
        b.samples.push_back(split_->pool[i]);
      out.push_back(std::move(b));
    }
    return out;
  }

 private:
  const DomainSplit* split_;
  std::vector<EpochSampler> samplers_;
};

inline Batch sample_pooled_batch(DomainBatchSampler& sampler, std::size_t batch_per_domain) {
  return sampler.pooled(batch_per_domain);
}

}  // namespace dgrl
