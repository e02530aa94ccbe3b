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

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dgrl/data/jsonl.hpp"
#include "dgrl/errors.hpp"
#include "dgrl/harness/config.hpp"
#include "dgrl/harness/experiment.hpp"
#include "dgrl/harness/results.hpp"

namespace dgrl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// Flag values that patch the config document before it is parsed, so the
// echoed config shows what actually ran.
struct Overrides {
  std::string method;
  std::string mrs;
  std::optional<double> eta, lambda_reg, gamma, eta_q, alpha;
  std::optional<int> M, M_groups, n_iter, parallelism;
  std::string seeds;
  std::string test_domain;
  std::string out;
};

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

inline double parse_double(const std::string& s, const std::string& flag) {
  std::istringstream is(s);
  is.imbue(std::locale::classic());
  double v;
  if (!(is >> v) || !is.eof()) throw InvalidInput(flag + ": '" + s + "' is not a number");
  return v;
}

inline long long parse_int(const std::string& s, const std::string& flag) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw InvalidInput(flag + ": '" + s + "' is not an integer");
  return v;
}

// Sets a swept or overridden hyper-parameter in the config document.
inline void set_param(json& doc, const std::string& name, const std::string& value) {
  const std::string flag = "--" + name;
  if (name == "eta") doc["dreame"]["eta"] = parse_double(value, flag);
  else if (name == "alpha") doc["dreame"]["alpha"] = parse_double(value, flag);
  else if (name == "M") doc["dreame"]["M"] = parse_int(value, flag);
  else if (name == "mrs") doc["dreame"]["mrs"] = value;
  else if (name == "M_groups") doc["groupdro_pp"]["M_groups"] = parse_int(value, flag);
  else if (name == "lambda_reg") doc["groupdro_pp"]["lambda_reg"] = parse_double(value, flag);
  else if (name == "gamma") doc["groupdro_pp"]["gamma"] = parse_double(value, flag);
  else if (name == "eta_q") {
    doc["groupdro_pp"]["eta_q"] = parse_double(value, flag);
    doc["groupdro"]["eta_q"] = parse_double(value, flag);
  } else if (name == "n_iter") {
    for (const char* m : {"erm", "groupdro", "groupdro_pp", "dreame"})
      doc[m]["n_iter"] = parse_int(value, flag);
  } else {
    throw InvalidInput("unknown parameter '" + name + "'");
  }
}

// The method a swept parameter belongs to.
inline Method ablation_method(const std::string& name) {
  if (name == "eta" || name == "alpha" || name == "M" || name == "mrs") return Method::dreame;
  if (name == "M_groups" || name == "lambda_reg" || name == "gamma" || name == "eta_q")
    return Method::groupdro_pp;
  throw InvalidInput("--ablate: cannot sweep '" + name + "'");
}

inline std::string number_text(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << v;
  return os.str();
}

inline json apply_overrides(json doc, const Overrides& o) {
  if (!o.method.empty()) {
    doc.erase("method");
    doc["methods"] = split_list(o.method);
  }
  if (!o.mrs.empty()) set_param(doc, "mrs", o.mrs);
  if (o.eta) set_param(doc, "eta", number_text(*o.eta));
  if (o.alpha) set_param(doc, "alpha", number_text(*o.alpha));
  if (o.lambda_reg) set_param(doc, "lambda_reg", number_text(*o.lambda_reg));
  if (o.gamma) set_param(doc, "gamma", number_text(*o.gamma));
  if (o.eta_q) set_param(doc, "eta_q", number_text(*o.eta_q));
  if (o.M) set_param(doc, "M", std::to_string(*o.M));
  if (o.M_groups) set_param(doc, "M_groups", std::to_string(*o.M_groups));
  if (o.n_iter) set_param(doc, "n_iter", std::to_string(*o.n_iter));
  if (o.parallelism) doc["parallelism"] = *o.parallelism;
  if (!o.seeds.empty()) {
    json seeds = json::array();
    for (const auto& s : split_list(o.seeds)) seeds.push_back(parse_int(s, "--seeds"));
    doc["seeds"] = seeds;
  }
  if (!o.test_domain.empty()) {
    if (o.test_domain == "all")
      doc["test_domain"] = "all";
    else
      doc["test_domain"] = parse_int(o.test_domain, "--test-domain");
  }
  if (!o.out.empty()) doc["output"] = o.out;
  // Sections created only by overrides for methods that are not run would
  // still be validated; that is intended.
  return doc;
}

inline void write_text(const fs::path& p, const std::string& s) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  if (!os) throw InvalidInput("cannot write '" + p.string() + "'");
  os << s;
}

inline fs::path run_path(const fs::path& dir, const RunOutcome& r) {
  return dir / to_string(r.method) /
         ("run_" + std::to_string(r.test_domain) + "_" + std::to_string(r.seed) + ".json");
}

inline void write_runs(const fs::path& dir, const std::vector<RunOutcome>& runs) {
  for (const auto& r : runs) write_text(run_path(dir, r), r.to_json().dump(2) + "\n");
}

inline std::vector<RunOutcome> read_runs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InvalidInput("--in: '" + dir.string() + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& sub : fs::directory_iterator(dir)) {
    if (!sub.is_directory()) continue;
    for (const auto& f : fs::directory_iterator(sub.path())) {
      const std::string name = f.path().filename().string();
      if (name.rfind("run_", 0) == 0 && f.path().extension() == ".json") files.push_back(f.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<RunOutcome> runs;
  for (const auto& f : files) runs.push_back(outcome_from_json(load_json_file(f.string())));
  if (runs.empty()) throw InvalidInput("--in: no run_*.json files under '" + dir.string() + "'");
  return runs;
}

inline void write_results(const fs::path& dir, const std::vector<RunOutcome>& runs,
                          SelectionStrategy selection, std::ostream& out) {
  const ResultTable main = aggregate_results(runs, selection);
  const SelectionStrategy other = selection == SelectionStrategy::overall_avg
                                      ? SelectionStrategy::overall_ens
                                      : SelectionStrategy::overall_avg;
  const ResultTable alt = aggregate_results(runs, other);
  write_text(dir / "results.csv", to_csv(main));
  const std::string text = to_text(main) + "\n" + to_text(alt);
  write_text(dir / "results.txt", text);
  write_text(dir / "results.json",
             json{{"primary", to_json(main)}, {"secondary", to_json(alt)}}.dump(2) + "\n");
  out << text;
  int failed = 0;
  for (const auto& r : runs)
    if (!r.ok) {
      ++failed;
      out << "failed: " << to_string(r.method) << " test_domain=" << r.test_domain
          << " seed=" << r.seed << ": " << r.error << "\n";
    }
  if (failed) out << failed << " run(s) failed; their cells are absent\n";
}

inline ExperimentConfig load_experiment(const std::string& config_path, const Overrides& o) {
  json doc = config_path.empty() ? json::object() : load_json_file(config_path);
  return experiment_from_json(apply_overrides(std::move(doc), o));
}

inline int cmd_generate(const ExperimentConfig& cfg, std::ostream& out) {
  const Dataset d = make_dataset(cfg.dataset);
  const fs::path dir(cfg.output);
  fs::create_directories(dir);
  save_jsonl((dir / "dataset.jsonl").string(), d);
  out << "wrote " << (dir / "dataset.jsonl").string() << " (" << d.samples.size() << " samples, "
      << d.num_domains << " domains)\n";
  return 0;
}

inline int cmd_train(const ExperimentConfig& cfg, std::ostream& out) {
  if (cfg.methods.size() != 1) throw InvalidInput("--method: train runs exactly one method");
  if (cfg.seeds.size() != 1) throw InvalidInput("--seeds: train runs exactly one seed");
  const Dataset d = make_dataset(cfg.dataset);
  const auto folds = cfg.folds(d.num_domains);
  if (folds.size() != 1) throw InvalidInput("--test-domain: train needs a single test domain");
  const RunOutcome r = run_single(d, cfg, cfg.methods[0], folds[0].first, folds[0].second, cfg.seeds[0]);
  const fs::path dir(cfg.output);
  fs::create_directories(dir);
  const fs::path p = dir / ("run_" + std::to_string(r.test_domain) + "_" + std::to_string(r.seed) + ".json");
  write_text(p, r.to_json().dump(2) + "\n");
  if (!r.ok) throw Error("training failed: " + r.error);
  out << "wrote " << p.string() << "\n";
  for (const auto& [s, acc] : r.test_accuracy)
    out << to_string(s) << " test accuracy " << detail::fixed(100.0 * acc, 2) << "\n";
  return 0;
}

inline int cmd_sweep(const json& doc, const std::string& ablate, std::ostream& out) {
  const ExperimentConfig base = experiment_from_json(doc);
  const Dataset d = make_dataset(base.dataset);
  const fs::path dir(base.output);
  if (ablate.empty()) {
    const auto runs = run_leave_one_out(d, base);
    write_runs(dir, runs);
    write_results(dir, runs, base.selection, out);
    return 0;
  }
  const auto eq = ablate.find('=');
  if (eq == std::string::npos) throw InvalidInput("--ablate: expected NAME=v1,v2,...");
  const std::string name = ablate.substr(0, eq);
  const std::vector<std::string> values = split_list(ablate.substr(eq + 1));
  if (values.empty()) throw InvalidInput("--ablate: no values given");
  const Method method = ablation_method(name);
  std::vector<AblationRow> rows;
  for (const auto& v : values) {
    json patched = doc;
    set_param(patched, name, v);
    patched.erase("method");
    patched["methods"] = {to_string(method)};
    const ExperimentConfig cfg = experiment_from_json(patched);
    const auto runs = run_leave_one_out(d, cfg);
    const std::string label = name + "=" + v;
    write_runs(dir / ("ablation_" + name) / label, runs);
    rows.push_back(ablation_row(label, runs));
  }
  std::string text = ablation_text(name, to_string(method), rows);
  if (name == "M") {
    const AblationRow* at = nullptr;
    const AblationRow* beyond = nullptr;
    for (const auto& r : rows) {
      if (r.label == "M=3") at = &r;
      if (r.label == "M=4") beyond = &r;
    }
    if (at && beyond) text += "\n" + ensemble_size_observation(*at, *beyond, "dreame");
  }
  write_text(dir / ("ablation_" + name + ".txt"), text);
  write_text(dir / ("ablation_" + name + ".csv"), ablation_csv(to_string(method), rows));
  out << text;
  return 0;
}

inline int cmd_report(const std::string& in, SelectionStrategy selection, std::ostream& out) {
  const fs::path dir(in);
  write_results(dir, read_runs(dir), selection, out);
  return 0;
}

// Entry point shared by the executable and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Domain generalization experiments on synthetic multi-domain data", "dgrl"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  std::string config_path, ablate, in_dir, selection;
  Overrides o;
  auto add_common = [&](CLI::App* c, bool overrides) {
    c->add_option("--config", config_path, "Experiment config (JSON)");
    c->add_option("--out", o.out, "Output directory");
    if (!overrides) return;
    c->add_option("--method", o.method, "erm, groupdro, groupdro_pp or dreame (comma list for sweep)");
    c->add_option("--mrs", o.mrs, "random, all_to_all, loss_based or gradient_matching");
    c->add_option("--eta", o.eta, "Meta-loss weight");
    c->add_option("--alpha", o.alpha, "Inner learning rate");
    c->add_option("--lambda-reg", o.lambda_reg, "GroupDRO++ regularizer weight");
    c->add_option("--gamma", o.gamma, "GroupDRO++ sharpness in (0, 1)");
    c->add_option("--eta-q", o.eta_q, "Group weight step size");
    c->add_option("--M", o.M, "Ensemble size");
    c->add_option("--M-groups", o.M_groups, "GroupDRO++ cluster count");
    c->add_option("--n-iter", o.n_iter, "Training steps for every method");
    c->add_option("--seeds", o.seeds, "Comma-separated seeds");
    c->add_option("--test-domain", o.test_domain, "Held-out domain index or 'all'");
    c->add_option("--parallel", o.parallelism, "Concurrent jobs");
  };
  CLI::App* gen = app.add_subcommand("generate", "Write the configured dataset as JSON lines");
  add_common(gen, false);
  CLI::App* train = app.add_subcommand("train", "Train one method on one fold and seed");
  add_common(train, true);
  CLI::App* sweep = app.add_subcommand("sweep", "Leave-one-domain-out grid over methods and seeds");
  add_common(sweep, true);
  sweep->add_option("--ablate", ablate, "Sweep one parameter, e.g. eta=0.2,0.4 or M=2,3,4");
  CLI::App* report = app.add_subcommand("report", "Aggregate run files into results tables");
  report->add_option("--in", in_dir, "Directory written by sweep")->required();
  report->add_option("--selection", selection, "overall_avg or overall_ens");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (gen->parsed()) return cmd_generate(load_experiment(config_path, o), out);
    if (train->parsed()) return cmd_train(load_experiment(config_path, o), out);
    if (sweep->parsed()) {
      json doc = config_path.empty() ? json::object() : load_json_file(config_path);
      return cmd_sweep(apply_overrides(std::move(doc), o), ablate, out);
    }
    return cmd_report(in_dir, selection.empty() ? SelectionStrategy::overall_avg
                                                : selection_from_string(selection),
                      out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace dgrl::cli
