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
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "dgrl/autodiff/tensor.hpp"
#include "dgrl/errors.hpp"
#include "dgrl/random.hpp"

namespace dgrl {

struct KMeansOptions {
  int max_iterations = 300;
  double tolerance = 1e-8;  // on the largest centroid shift
  int restarts = 10;        // independent seedings; the lowest inertia wins
};

struct KMeansResult {
  std::vector<int> labels;
  Tensor centroids;  // M x d
  double inertia = 0.0;
  int iterations = 0;
};

namespace detail {

inline double sq_dist(const Tensor& Z, std::size_t i, const Tensor& C, std::size_t c) {
  const std::size_t d = Z.cols();
  double s = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double diff = Z[i * d + j] - C[c * d + j];
    s += diff * diff;
  }
  return s;
}

// Nearest centroid per row (ties to the lowest index); returns inertia.
inline double assign_nearest(const Tensor& Z, const Tensor& C, std::vector<int>& labels,
                             std::vector<double>& dist) {
  const std::size_t n = Z.rows(), m = C.rows();
  double inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    double bd = sq_dist(Z, i, C, 0);
    for (std::size_t c = 1; c < m; ++c) {
      const double dc = sq_dist(Z, i, C, c);
      if (dc < bd) best = c, bd = dc;
    }
    labels[i] = static_cast<int>(best);
    dist[i] = bd;
    inertia += bd;
  }
  return inertia;
}

inline Tensor kmeans_plus_plus(const Tensor& Z, std::size_t m, Rng& rng) {
  const std::size_t n = Z.rows(), d = Z.cols();
  Tensor C(Shape{m, d});
  std::uniform_int_distribution<std::size_t> uniform(0, n - 1);
  auto copy_row = [&](std::size_t from, std::size_t to) {
    std::copy_n(Z.data().begin() + static_cast<std::ptrdiff_t>(from * d), d,
                C.data().begin() + static_cast<std::ptrdiff_t>(to * d));
  };
  copy_row(uniform(rng), 0);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  for (std::size_t c = 1; c < m; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], sq_dist(Z, i, C, c - 1));
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng);
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        if (r < d2[i]) {
          pick = i;
          break;
        }
        r -= d2[i];
      }
      while (d2[pick] <= 0.0) --pick;  // never land on an existing center
    } else {
      pick = uniform(rng);  // every point coincides with a center
    }
    copy_row(pick, c);
  }
  return C;
}

// One run of Lloyd's algorithm with k-means++ seeding. An empty cluster is
// re-seeded at the point farthest from its currently assigned centroid.
inline KMeansResult lloyd(const Tensor& Z, std::size_t m, Rng& rng, const KMeansOptions& opt) {
  const std::size_t n = Z.rows(), d = Z.cols();
  KMeansResult r;
  r.centroids = detail::kmeans_plus_plus(Z, m, rng);
  r.labels.assign(n, 0);
  std::vector<double> dist(n, 0.0);
  for (r.iterations = 1; r.iterations <= opt.max_iterations; ++r.iterations) {
    detail::assign_nearest(Z, r.centroids, r.labels, dist);
    Tensor next(Shape{m, d});
    std::vector<std::size_t> count(m, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(r.labels[i]);
      ++count[c];
      for (std::size_t j = 0; j < d; ++j) next[c * d + j] += Z[i * d + j];
    }
    for (std::size_t c = 0; c < m; ++c) {
      if (count[c] > 0) {
        for (std::size_t j = 0; j < d; ++j) next[c * d + j] /= static_cast<double>(count[c]);
        continue;
      }
      const auto far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
      for (std::size_t j = 0; j < d; ++j) next[c * d + j] = Z[far * d + j];
      dist[far] = 0.0;
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = next[c * d + j] - r.centroids[c * d + j];
        s += diff * diff;
      }
      shift = std::max(shift, std::sqrt(s));
    }
    r.centroids = std::move(next);
    if (shift < opt.tolerance) break;
  }
  r.iterations = std::min(r.iterations, opt.max_iterations);
  r.inertia = detail::assign_nearest(Z, r.centroids, r.labels, dist);
  return r;
}

}  // namespace detail

inline KMeansResult kmeans(const Tensor& Z, int num_clusters, std::uint64_t seed,
                           const KMeansOptions& opt = {}) {
  if (Z.rank() != 2) throw ShapeMismatch("kmeans: expected an N x d matrix");
  if (num_clusters < 1) throw InvalidInput("kmeans: need at least one cluster");
  if (opt.restarts < 1) throw InvalidInput("kmeans: restarts must be >= 1");
  const std::size_t n = Z.rows(), m = static_cast<std::size_t>(num_clusters);
  if (n < m)
    throw InvalidInput("kmeans: " + std::to_string(n) + " points for " + std::to_string(m) +
                       " clusters");
  KMeansResult best;
  for (int r = 0; r < opt.restarts; ++r) {
    Rng rng(derive_seed(seed, {stream::kCluster, static_cast<std::uint64_t>(r)}));
    KMeansResult run = detail::lloyd(Z, m, rng, opt);
    if (r == 0 || run.inertia < best.inertia) best = std::move(run);
  }
  return best;
}

inline std::vector<int> kmeans_cluster(const Tensor& Z, int num_clusters, std::uint64_t seed) {
  return kmeans(Z, num_clusters, seed).labels;
}

}  // namespace dgrl
