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

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dgrl/errors.hpp"
#include "dgrl/models/mlp.hpp"

// Parameter checkpoints.
//
// Binary layout (little-endian hosts only), version 1:
//   magic   "DGRLPRM1"           8 bytes
//   u32     version (= 1)
//   u32     activation           0 = relu, 1 = tanh
//   u64     input_dim, num_classes, num_hidden, hidden_dims[num_hidden]
//   u64     num_tensors
//   per tensor: u64 rank, u64 dims[rank], f64 data[prod(dims)]
//
// JSON layout: {"format": "dgrl-params", "version": 1, "spec": {...},
//               "tensors": [{"shape": [...], "data": [...]}, ...]}

namespace dgrl {

inline constexpr std::array<char, 8> kParamMagic{'D', 'G', 'R', 'L', 'P', 'R', 'M', '1'};
inline constexpr std::uint32_t kParamVersion = 1;

namespace detail {
template <class V>
void put(std::ostream& os, V v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}
template <class V>
V get(std::istream& is) {
  V v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(V))) throw InvalidInput("checkpoint: truncated");
  return v;
}
}  // namespace detail

inline void write_params_binary(std::ostream& os, const MLPParams& p) {
  p.check_consistent();
  os.write(kParamMagic.data(), kParamMagic.size());
  detail::put<std::uint32_t>(os, kParamVersion);
  detail::put<std::uint32_t>(os, p.spec.activation == Activation::relu ? 0U : 1U);
  detail::put<std::uint64_t>(os, p.spec.input_dim);
  detail::put<std::uint64_t>(os, p.spec.num_classes);
  detail::put<std::uint64_t>(os, p.spec.hidden_dims.size());
  for (auto h : p.spec.hidden_dims) detail::put<std::uint64_t>(os, h);
  detail::put<std::uint64_t>(os, p.tensors.size());
  for (const auto& t : p.tensors) {
    detail::put<std::uint64_t>(os, t.rank());
    for (auto d : t.shape()) detail::put<std::uint64_t>(os, d);
    os.write(reinterpret_cast<const char*>(t.data().data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
}

inline MLPParams read_params_binary(std::istream& is) {
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kParamMagic)
    throw InvalidInput("checkpoint: bad magic");
  const auto version = detail::get<std::uint32_t>(is);
  if (version != kParamVersion)
    throw InvalidInput("checkpoint: unsupported version " + std::to_string(version));
  MLPParams p;
  const auto act = detail::get<std::uint32_t>(is);
  if (act > 1) throw InvalidInput("checkpoint: bad activation code");
  p.spec.activation = act == 0 ? Activation::relu : Activation::tanh;
  p.spec.input_dim = detail::get<std::uint64_t>(is);
  p.spec.num_classes = detail::get<std::uint64_t>(is);
  p.spec.hidden_dims.resize(detail::get<std::uint64_t>(is));
  for (auto& h : p.spec.hidden_dims) h = detail::get<std::uint64_t>(is);
  const auto n = detail::get<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < n; ++i) {
    Shape shape(detail::get<std::uint64_t>(is));
    for (auto& d : shape) d = detail::get<std::uint64_t>(is);
    Tensor t(shape);
    if (!is.read(reinterpret_cast<char*>(t.data().data()),
                 static_cast<std::streamsize>(t.size() * sizeof(double))))
      throw InvalidInput("checkpoint: truncated tensor data");
    p.tensors.push_back(std::move(t));
  }
  p.check_consistent();
  return p;
}

inline nlohmann::json spec_to_json(const MLPSpec& s) {
  return {{"input_dim", s.input_dim},
          {"hidden_dims", s.hidden_dims},
          {"num_classes", s.num_classes},
          {"activation", to_string(s.activation)}};
}

inline MLPSpec spec_from_json(const nlohmann::json& j) {
  MLPSpec s;
  s.input_dim = j.value("input_dim", s.input_dim);
  s.hidden_dims = j.value("hidden_dims", s.hidden_dims);
  s.num_classes = j.value("num_classes", s.num_classes);
  s.activation = activation_from_string(j.value("activation", std::string("relu")));
  return s;
}

inline nlohmann::json params_to_json(const MLPParams& p) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : p.tensors) tensors.push_back({{"shape", t.shape()}, {"data", t.data()}});
  return {{"format", "dgrl-params"},
          {"version", kParamVersion},
          {"spec", spec_to_json(p.spec)},
          {"tensors", tensors}};
}

inline MLPParams params_from_json(const nlohmann::json& j) {
  if (j.value("format", std::string()) != "dgrl-params")
    throw InvalidInput("checkpoint: not a dgrl-params document");
  MLPParams p;
  p.spec = spec_from_json(j.at("spec"));
  for (const auto& t : j.at("tensors"))
    p.tensors.emplace_back(t.at("shape").get<Shape>(), t.at("data").get<std::vector<double>>());
  p.check_consistent();
  return p;
}

inline void save_params(const std::string& path, const MLPParams& p, bool binary = true) {
  std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
  if (!os) throw InvalidInput("cannot open '" + path + "' for writing");
  if (binary)
    write_params_binary(os, p);
  else
    os << params_to_json(p).dump() << '\n';
}

inline MLPParams load_params(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidInput("cannot open '" + path + "'");
  std::array<char, 8> head{};
  is.read(head.data(), head.size());
  is.clear();
  is.seekg(0);
  if (head == kParamMagic) return read_params_binary(is);
  nlohmann::json j;
  is >> j;
  return params_from_json(j);
}

}  // namespace dgrl
