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

#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "json.hpp"

#include "dgrl/data/dataset.hpp"
#include "dgrl/errors.hpp"

// Dataset files: JSON lines, one sample per line,
//   {"x": [...], "y": 1, "domain_id": 0, "group_id": 0, "latent_group": 2}
// latent_group is null when the generator has no ground truth.

namespace dgrl {

inline void write_jsonl(std::ostream& os, const Dataset& d) {
  for (const auto& ls : d.samples) {
    nlohmann::json j{{"x", ls.sample.x},
                     {"y", ls.sample.y},
                     {"domain_id", ls.sample.domain_id},
                     {"group_id", ls.sample.group_id}};
    j["latent_group"] = ls.latent_group ? nlohmann::json(*ls.latent_group) : nlohmann::json(nullptr);
    os << j.dump() << '\n';
  }
}

inline Dataset read_jsonl(std::istream& is) {
  Dataset d;
  std::string line;
  std::size_t lineno = 0;
  int max_domain = -1, max_class = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw InvalidInput("dataset line " + std::to_string(lineno) + ": " + e.what());
    }
    LabeledSample ls;
    ls.sample.x = j.at("x").get<std::vector<double>>();
    ls.sample.y = j.at("y").get<int>();
    ls.sample.domain_id = j.at("domain_id").get<int>();
    ls.sample.group_id = j.value("group_id", ls.sample.domain_id);
    if (j.contains("latent_group") && !j["latent_group"].is_null())
      ls.latent_group = j["latent_group"].get<int>();
    if (d.samples.empty())
      d.dim = ls.sample.x.size();
    else if (ls.sample.x.size() != d.dim)
      throw InvalidInput("dataset line " + std::to_string(lineno) + ": feature width differs");
    if (ls.sample.y < 0 || ls.sample.domain_id < 0)
      throw InvalidInput("dataset line " + std::to_string(lineno) + ": negative label or domain");
    max_domain = std::max(max_domain, ls.sample.domain_id);
    max_class = std::max(max_class, ls.sample.y);
    d.samples.push_back(std::move(ls));
  }
  d.num_domains = max_domain + 1;
  d.num_classes = max_class + 1;
  return d;
}

inline void save_jsonl(const std::string& path, const Dataset& d) {
  std::ofstream os(path);
  if (!os) throw InvalidInput("cannot open '" + path + "' for writing");
  write_jsonl(os, d);
}

inline Dataset load_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InvalidInput("cannot open '" + path + "'");
  return read_jsonl(is);
}

}  // namespace dgrl
