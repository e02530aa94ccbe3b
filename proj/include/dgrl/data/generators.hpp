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

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "dgrl/data/dataset.hpp"
#include "dgrl/errors.hpp"
#include "dgrl/random.hpp"

namespace dgrl {

// Two-moons, one domain per rotation angle. Class 0 lies on the upper unit
// semicircle, class 1 on the lower one shifted to (1, 0.5); noise is added
// and the whole picture is rotated about (0.5, 0.25). Classes alternate so
// each domain is balanced. latent_group = domain_id.
inline Dataset generate_rotated_moons(int num_domains, const std::vector<double>& angles_deg,
                                      std::size_t n_per_domain, double noise_sd,
                                      std::uint64_t seed) {
  if (num_domains < 2) throw InvalidInput("rotated moons: need at least 2 domains");
  if (angles_deg.size() != static_cast<std::size_t>(num_domains))
    throw InvalidInput("rotated moons: " + std::to_string(angles_deg.size()) + " angles for " +
                       std::to_string(num_domains) + " domains");
  if (!(noise_sd >= 0.0)) throw InvalidInput("rotated moons: noise_sd must be >= 0");
  Dataset d;
  d.num_domains = num_domains;
  d.num_classes = 2;
  d.dim = 2;
  constexpr double cx = 0.5, cy = 0.25;
  for (int k = 0; k < num_domains; ++k) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(k)}));
    std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
    std::normal_distribution<double> noise(0.0, 1.0);
    const double rad = angles_deg[static_cast<std::size_t>(k)] * std::numbers::pi / 180.0;
    const double c = std::cos(rad), s = std::sin(rad);
    for (std::size_t i = 0; i < n_per_domain; ++i) {
      const int y = static_cast<int>(i % 2);
      const double t = angle(rng);
      double px = y == 0 ? std::cos(t) : 1.0 - std::cos(t);
      double py = y == 0 ? std::sin(t) : 0.5 - std::sin(t);
      if (noise_sd > 0.0) {
        px += noise_sd * noise(rng);
        py += noise_sd * noise(rng);
      }
      const double rx = cx + c * (px - cx) - s * (py - cy);
      const double ry = cy + s * (px - cx) + c * (py - cy);
      d.samples.push_back({Sample{{rx, ry}, y, k, k}, k});
    }
  }
  return d;
}

// Knobs of the latent-group generator beyond the core arguments.
struct BlobOptions {
  std::size_t dim = 3;              // >= 2; centers live in the first two coordinates
  double within_sd = 1.0;           // per-coordinate spread inside a group
  std::vector<double> group_weights;  // empty: proportional to G, G-1, ..., 1
};

// Gaussian clusters on a circle of radius `separation` define latent_group.
// Inside group g the label is the side of a group-specific hyperplane through
// the cluster center: y = [(x - c_g) . u_g > 0] with u_g = (cos a_g, sin a_g,
// ±1 in the third coordinate, alternating by group) normalized. Declared
// domains copy the latent group modulo K_declared, or are uniform random when
// shuffle_declared is set.
inline Dataset generate_latent_group_blobs(int true_groups, int k_declared, std::size_t n,
                                           double separation, bool shuffle_declared,
                                           std::uint64_t seed, const BlobOptions& opt = {}) {
  if (true_groups < 2) throw InvalidInput("latent blobs: need at least 2 groups");
  if (k_declared < 1) throw InvalidInput("latent blobs: need at least 1 declared domain");
  if (!(separation > 0.0)) throw InvalidInput("latent blobs: separation must be positive");
  if (opt.dim < 2) throw InvalidInput("latent blobs: dim must be >= 2");
  std::vector<double> w = opt.group_weights;
  if (w.empty())
    for (int g = 0; g < true_groups; ++g) w.push_back(static_cast<double>(true_groups - g));
  if (w.size() != static_cast<std::size_t>(true_groups))
    throw InvalidInput("latent blobs: group_weights must have one entry per group");

  Dataset d;
  d.num_domains = k_declared;
  d.num_classes = 2;
  d.dim = opt.dim;
  Rng rng(derive_seed(seed, {0xB10B}));
  std::discrete_distribution<int> pick_group(w.begin(), w.end());
  std::uniform_int_distribution<int> pick_domain(0, k_declared - 1);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<std::vector<double>> centers, normals;
  for (int g = 0; g < true_groups; ++g) {
    const double a = 2.0 * std::numbers::pi * g / true_groups;
    std::vector<double> c(opt.dim, 0.0);
    c[0] = separation * std::cos(a);
    c[1] = separation * std::sin(a);
    centers.push_back(c);
    std::vector<double> u(opt.dim, 0.0);
    const double b = a + std::numbers::pi / 2.0;
    u[0] = std::cos(b);
    u[1] = std::sin(b);
    if (opt.dim > 2) u[2] = (g % 2 == 0) ? 1.0 : -1.0;
    double norm = 0.0;
    for (double v : u) norm += v * v;
    for (double& v : u) v /= std::sqrt(norm);
    normals.push_back(u);
  }

  for (std::size_t i = 0; i < n; ++i) {
    const int g = pick_group(rng);
    std::vector<double> x(opt.dim);
    double side = 0.0;
    for (std::size_t j = 0; j < opt.dim; ++j) {
      const double off = opt.within_sd * normal(rng);
      x[j] = centers[static_cast<std::size_t>(g)][j] + off;
      side += off * normals[static_cast<std::size_t>(g)][j];
    }
    const int y = side > 0.0 ? 1 : 0;
    const int domain = shuffle_declared ? pick_domain(rng) : g % k_declared;
    d.samples.push_back({Sample{std::move(x), y, domain, domain}, g});
  }
  return d;
}

}  // namespace dgrl
