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

#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "dgrl/data/dataset.hpp"
#include "dgrl/errors.hpp"
#include "dgrl/random.hpp"

namespace dgrl {

// Feature-space transforms used to manufacture extra meta-validation batches.
struct AugmentTransform {
  enum class Kind { gaussian_jitter, random_scale, feature_dropout };
  Kind kind = Kind::gaussian_jitter;
  double a = 0.0;  // sigma | scale low  | drop probability
  double b = 0.0;  //       | scale high |

  static AugmentTransform jitter(double sigma) { return {Kind::gaussian_jitter, sigma, 0.0}; }
  static AugmentTransform scale(double lo, double hi) { return {Kind::random_scale, lo, hi}; }
  static AugmentTransform dropout(double p) { return {Kind::feature_dropout, p, 0.0}; }

  void validate() const {
    switch (kind) {
      case Kind::gaussian_jitter:
        if (!(a >= 0.0)) throw InvalidInput("gaussian_jitter: sigma must be >= 0");
        break;
      case Kind::random_scale:
        if (!(a > 0.0 && a <= b)) throw InvalidInput("random_scale: need 0 < low <= high");
        break;
      case Kind::feature_dropout:
        if (!(a >= 0.0 && a < 1.0)) throw InvalidInput("feature_dropout: p must be in [0, 1)");
        break;
    }
  }

  friend bool operator==(const AugmentTransform&, const AugmentTransform&) = default;
};

using AugmentSpec = std::vector<AugmentTransform>;

inline nlohmann::json to_json(const AugmentTransform& t) {
  switch (t.kind) {
    case AugmentTransform::Kind::gaussian_jitter:
      return {{"kind", "gaussian_jitter"}, {"sigma", t.a}};
    case AugmentTransform::Kind::random_scale:
      return {{"kind", "random_scale"}, {"low", t.a}, {"high", t.b}};
    case AugmentTransform::Kind::feature_dropout:
      return {{"kind", "feature_dropout"}, {"p", t.a}};
  }
  return {};
}

inline AugmentTransform augment_from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  AugmentTransform t;
  if (kind == "gaussian_jitter")
    t = AugmentTransform::jitter(j.at("sigma").get<double>());
  else if (kind == "random_scale")
    t = AugmentTransform::scale(j.at("low").get<double>(), j.at("high").get<double>());
  else if (kind == "feature_dropout")
    t = AugmentTransform::dropout(j.at("p").get<double>());
  else
    throw InvalidInput("unknown augmentation '" + kind + "'");
  t.validate();
  return t;
}

inline Batch apply_transform(const Batch& src, const AugmentTransform& t, int aug_id, Rng& rng) {
  Batch out = src;
  out.origin = {BatchKind::augmented, src.origin.source, aug_id};
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (auto& s : out.samples) {
    switch (t.kind) {
      case AugmentTransform::Kind::gaussian_jitter:
        if (t.a > 0.0)
          for (double& v : s.x) v += t.a * normal(rng);
        break;
      case AugmentTransform::Kind::random_scale: {
        const double f = t.a + (t.b - t.a) * unit(rng);
        for (double& v : s.x) v *= f;
        break;
      }
      case AugmentTransform::Kind::feature_dropout:
        for (double& v : s.x)
          if (unit(rng) < t.a) v = 0.0;
        break;
    }
  }
  return out;
}

// Returns the K source batches followed by one transformed copy of each
// source batch per transform: K * (1 + |spec|) batches, transform-major.
inline std::vector<Batch> augment_meta_validation(const std::vector<Batch>& batches,
                                                  const AugmentSpec& spec, Rng& rng) {
  for (const auto& t : spec) t.validate();
  std::vector<Batch> out = batches;
  for (std::size_t a = 0; a < spec.size(); ++a)
    for (const auto& b : batches) out.push_back(apply_transform(b, spec[a], static_cast<int>(a), rng));
  return out;
}

}  // namespace dgrl
