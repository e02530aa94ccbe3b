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
#include <cstdint>
#include <iomanip>
#include <locale>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "dgrl/errors.hpp"
#include "dgrl/eval/metrics.hpp"
#include "dgrl/harness/experiment.hpp"

namespace dgrl {

// Mean and sample standard deviation (n - 1) over seeds. A failed seed makes
// the whole cell absent.
struct Cell {
  std::vector<std::uint64_t> seeds;
  std::vector<std::optional<double>> values;  // aligned with seeds
  std::optional<double> mean;
  std::optional<double> std;
  int failures = 0;
};

inline Cell summarize(std::vector<std::uint64_t> seeds, std::vector<std::optional<double>> values) {
  Cell c;
  c.seeds = std::move(seeds);
  c.values = std::move(values);
  std::vector<double> v;
  for (const auto& x : c.values) {
    if (x)
      v.push_back(*x);
    else
      ++c.failures;
  }
  if (c.failures > 0 || v.empty()) return c;
  double s = 0.0;
  for (double x : v) s += x;
  const double m = s / static_cast<double>(v.size());
  c.mean = m;
  if (v.size() >= 2) {
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    c.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return c;
}

struct ResultTable {
  SelectionStrategy selection = SelectionStrategy::overall_avg;
  std::vector<std::string> methods;  // row order
  std::vector<int> domains;          // column order
  std::map<std::pair<std::string, int>, Cell> cells;
  std::map<std::string, Cell> average;  // per-seed mean over domains, then over seeds

  const Cell& cell(const std::string& method, int domain) const { return cells.at({method, domain}); }
};

// Groups outcomes by (method, test domain); seeds are ordered numerically so
// the result does not depend on completion order.
inline ResultTable aggregate_results(const std::vector<RunOutcome>& runs, SelectionStrategy s) {
  ResultTable t;
  t.selection = s;
  std::map<std::tuple<std::string, int, std::uint64_t>, std::optional<double>> raw;
  std::set<int> domains;
  std::set<std::uint64_t> all_seeds;
  for (const auto& r : runs) {
    const std::string m = to_string(r.method);
    if (std::find(t.methods.begin(), t.methods.end(), m) == t.methods.end()) t.methods.push_back(m);
    if (!raw.emplace(std::tuple{m, r.test_domain, r.seed}, r.accuracy(s)).second)
      throw InvalidInput("aggregate: duplicate run for " + m + ", test domain " +
                         std::to_string(r.test_domain) + ", seed " + std::to_string(r.seed));
    domains.insert(r.test_domain);
    all_seeds.insert(r.seed);
  }
  std::sort(t.methods.begin(), t.methods.end(), [](const std::string& a, const std::string& b) {
    return method_from_string(a) < method_from_string(b);
  });
  t.domains.assign(domains.begin(), domains.end());
  const std::vector<std::uint64_t> seeds(all_seeds.begin(), all_seeds.end());
  for (const auto& m : t.methods) {
    std::vector<std::optional<double>> avg(seeds.size(), 0.0);
    for (int d : t.domains) {
      std::vector<std::optional<double>> vals;
      for (std::size_t i = 0; i < seeds.size(); ++i) {
        auto it = raw.find({m, d, seeds[i]});
        if (it == raw.end())
          throw InvalidInput("aggregate: inconsistent keys, " + m + " has no run for test domain " +
                             std::to_string(d) + ", seed " + std::to_string(seeds[i]));
        vals.push_back(it->second);
        if (it->second && avg[i])
          *avg[i] += *it->second / static_cast<double>(t.domains.size());
        else
          avg[i].reset();
      }
      t.cells[{m, d}] = summarize(seeds, std::move(vals));
    }
    t.average[m] = summarize(seeds, std::move(avg));
  }
  return t;
}

namespace detail {

inline std::ostringstream classic_stream() {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  return os;
}

inline std::string fixed(double v, int digits) {
  auto os = classic_stream();
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

inline std::string pad(const std::string& s, std::size_t width) {
  // Width counts code points so the "±" sign does not skew alignment.
  std::size_t len = 0;
  for (unsigned char c : s) len += (c & 0xC0) != 0x80;
  return len >= width ? s : s + std::string(width - len, ' ');
}

inline std::string percent_cell(const Cell& c, bool with_std) {
  if (!c.mean) return "--";
  std::string s = fixed(100.0 * *c.mean, 2);
  if (with_std && c.std) s += " ± " + fixed(100.0 * *c.std, 2);
  return s;
}

inline std::string render_grid(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.size(); ++i) {
      std::size_t len = 0;
      for (unsigned char c : r[i]) len += (c & 0xC0) != 0x80;
      if (width.size() <= i) width.push_back(0);
      width[i] = std::max(width[i], len);
    }
  std::string out;
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t i = 0; i < r.size(); ++i) line += (i ? "  " : "") + pad(r[i], width[i]);
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  }
  return out;
}

}  // namespace detail

inline std::string domain_label(int d) { return "D" + std::to_string(d); }

// CSV rows: one per (method, test domain) plus an "average" row per method.
// Accuracies are fractions; absent values are empty fields.
inline std::string to_csv(const ResultTable& t) {
  auto os = detail::classic_stream();
  os << "method,test_domain,mean,std\n";
  auto emit = [&](const std::string& m, const std::string& d, const Cell& c) {
    os << m << ',' << d << ',' << (c.mean ? detail::fixed(*c.mean, 6) : "") << ','
       << (c.std ? detail::fixed(*c.std, 6) : "") << '\n';
  };
  for (const auto& m : t.methods) {
    for (int d : t.domains) emit(m, std::to_string(d), t.cell(m, d));
    emit(m, "average", t.average.at(m));
  }
  return os.str();
}

// Methods as rows, test domains as columns, then Average; mean ± std in percent.
inline std::string to_text(const ResultTable& t) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> head{"method"};
  for (int d : t.domains) head.push_back(domain_label(d));
  head.push_back("Average");
  rows.push_back(head);
  for (const auto& m : t.methods) {
    std::vector<std::string> r{m};
    for (int d : t.domains) r.push_back(detail::percent_cell(t.cell(m, d), true));
    r.push_back(detail::percent_cell(t.average.at(m), true));
    rows.push_back(r);
  }
  return "selection: " + std::string(to_string(t.selection)) + "\n" + detail::render_grid(rows);
}

inline nlohmann::json to_json(const ResultTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  auto cell_json = [](const Cell& c) {
    nlohmann::json v = nlohmann::json::array();
    for (const auto& x : c.values) v.push_back(x ? nlohmann::json(*x) : nlohmann::json(nullptr));
    return nlohmann::json{{"seeds", c.seeds},
                          {"values", v},
                          {"mean", c.mean ? nlohmann::json(*c.mean) : nlohmann::json(nullptr)},
                          {"std", c.std ? nlohmann::json(*c.std) : nlohmann::json(nullptr)},
                          {"failures", c.failures}};
  };
  for (const auto& m : t.methods) {
    nlohmann::json r{{"method", m}};
    for (int d : t.domains) r[domain_label(d)] = cell_json(t.cell(m, d));
    r["average"] = cell_json(t.average.at(m));
    rows.push_back(r);
  }
  return {{"selection", to_string(t.selection)}, {"rows", rows}};
}

// ----------------------------------------------------------------- ablations

// One swept value, reported under both selection strategies.
struct AblationRow {
  std::string label;  // e.g. "eta=0.6"
  ResultTable avg;
  ResultTable ens;
};

inline AblationRow ablation_row(std::string label, const std::vector<RunOutcome>& runs) {
  return {std::move(label), aggregate_results(runs, SelectionStrategy::overall_avg),
          aggregate_results(runs, SelectionStrategy::overall_ens)};
}

// Rows "<label> Avg" and "<label> Ens", columns test domains and Avg., for
// a single method.
inline std::string ablation_text(const std::string& title, const std::string& method,
                                 const std::vector<AblationRow>& rows) {
  if (rows.empty()) return title + "\n";
  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> head{title, ""};
  for (int d : rows.front().avg.domains) head.push_back(domain_label(d));
  head.push_back("Avg.");
  grid.push_back(head);
  for (const auto& r : rows)
    for (const auto* t : {&r.avg, &r.ens}) {
      std::vector<std::string> line{t == &r.avg ? r.label : "", t == &r.avg ? "Avg" : "Ens"};
      for (int d : t->domains) line.push_back(detail::percent_cell(t->cell(method, d), false));
      line.push_back(detail::percent_cell(t->average.at(method), false));
      grid.push_back(line);
    }
  return detail::render_grid(grid);
}

inline std::string ablation_csv(const std::string& method, const std::vector<AblationRow>& rows) {
  auto os = detail::classic_stream();
  os << "value,selection,test_domain,mean,std\n";
  for (const auto& r : rows)
    for (const auto* t : {&r.avg, &r.ens}) {
      auto emit = [&](const std::string& d, const Cell& c) {
        os << r.label << ',' << to_string(t->selection) << ',' << d << ','
           << (c.mean ? detail::fixed(*c.mean, 6) : "") << ','
           << (c.std ? detail::fixed(*c.std, 6) : "") << '\n';
      };
      for (int d : t->domains) emit(std::to_string(d), t->cell(method, d));
      emit("average", t->average.at(method));
    }
  return os.str();
}

// Whether growing the ensemble past `from` changed the average by more than
// the seed-to-seed spread (and at least one accuracy point).
inline std::string ensemble_size_observation(const AblationRow& at, const AblationRow& beyond,
                                             const std::string& method) {
  std::string out;
  const std::pair<const ResultTable*, const ResultTable*> pairs[] = {{&at.avg, &beyond.avg},
                                                                     {&at.ens, &beyond.ens}};
  for (const auto& [ta, tb] : pairs) {
    const Cell& a = ta->average.at(method);
    const Cell& b = tb->average.at(method);
    const std::string sel = to_string(ta->selection);
    if (!a.mean || !b.mean) {
      out += sel + ": undetermined (missing runs)\n";
      continue;
    }
    const double gain = *b.mean - *a.mean;
    const double spread = std::max({a.std.value_or(0.0), b.std.value_or(0.0), 0.01});
    out += sel + ": " + beyond.label + " vs " + at.label + " changes Avg. by " +
           detail::fixed(100.0 * gain, 2) + " points; no significant improvement beyond " +
           at.label + " " + (gain <= spread ? "observed" : "not observed") + "\n";
  }
  return out;
}

}  // namespace dgrl
