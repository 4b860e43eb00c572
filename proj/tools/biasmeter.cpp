// Copyright 2026 The BiasMeter Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// biasmeter: command-line front end.
//
//   biasmeter measure  <manifest> [overrides]
//   biasmeter simulate <manifest> --seed N [overrides]
//   biasmeter compare  <manifest-a> <manifest-b> [--output DIR]
//   biasmeter aggregate <lists-file> --method borda|median|kemeny [--depth K] [--output FILE]
//   biasmeter validate <file> [--kind auto|lists|profiles|schema|ground_truth|manifest]
//
// Exit codes: 0 ran, 2 input error, 3 configuration error.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "biasmeter/io.hpp"

namespace {

using namespace biasmeter;

constexpr int kExitInput = 2;
constexpr int kExitConfig = 3;

struct Overrides {
  std::optional<double> epsilon;
  std::optional<std::size_t> k;
  std::optional<std::string> dr;
  std::optional<std::string> aggregator;
  std::optional<std::string> weighting;
  std::optional<std::string> query_aggregation;
  std::optional<std::size_t> permutations;
  std::optional<std::size_t> bootstrap;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
  std::vector<std::string> measures;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--epsilon", epsilon, "bias threshold");
    cmd->add_option("--k", k, "top-k depth for list distances");
    cmd->add_option("--dr", dr, "list distance: kendall, rbo, topk, distribution");
    cmd->add_option("--aggregator", aggregator, "borda, median or kemeny");
    cmd->add_option("--weighting", weighting, "uniform or rank_discounted");
    cmd->add_option("--query-aggregation", query_aggregation, "mean or max");
    cmd->add_option("--permutations", permutations, "label permutations, 0 disables");
    cmd->add_option("--bootstrap", bootstrap, "bootstrap resamples, 0 disables");
    cmd->add_option("--output", output, "report directory");
    cmd->add_option("--measure", measures, "restrict to these measures (repeatable)");
  }

  void apply(AuditManifest& m) const {
    if (epsilon) m.config.epsilon = *epsilon;
    if (k) m.config.k = *k;
    if (dr) m.config.dr_kind = parse_distance_kind(*dr);
    if (aggregator) m.config.aggregator = parse_aggregator(*aggregator);
    if (weighting) m.config.weighting = parse_weighting(*weighting);
    if (query_aggregation) m.config.query_aggregation = parse_query_aggregation(*query_aggregation);
    if (permutations) m.significance.permutations = *permutations;
    if (bootstrap) m.significance.bootstrap_resamples = *bootstrap;
    if (seed) {
      m.significance.seed = *seed;
      if (m.scenario) m.scenario->seed = *seed;
    }
    if (output) m.output_dir = *output;
    if (!measures.empty()) {
      const auto& all = all_measure_names();
      for (const auto& name : measures) {
        if (std::find(all.begin(), all.end(), name) == all.end()) {
          throw ConfigError("unknown measure '" + name + "'");
        }
      }
      m.measures = measures;
    }
    validate(m.config);
  }
};

void print(const AuditReport& r, const std::optional<std::filesystem::path>& dir) {
  std::cout << report_text(r);
  if (dir) std::cout << "report written to " << dir->string() << "\n";
}

int run_measure(const std::string& path, const Overrides& o) {
  auto m = load_manifest(path);
  if (m.scenario) throw ConfigError("manifest has a scenario; use 'simulate'");
  o.apply(m);
  print(run_audit(m), m.output_dir);
  return 0;
}

int run_simulate(const std::string& path, const Overrides& o) {
  auto m = load_manifest(path);
  if (!m.scenario) throw ConfigError("manifest has no scenario; use 'measure'");
  o.apply(m);
  if (m.output_dir) {
    write_simulation(*m.output_dir / "data", *m.scenario, resolve_input(m));
  }
  print(run_audit(m), m.output_dir);
  return 0;
}

int run_compare(const std::string& a, const std::string& b, const std::optional<std::string>& output) {
  auto ma = load_manifest(a);
  const auto mb = load_manifest(b);
  ma.output_dir.reset();
  if (output) ma.output_dir = *output;
  print(compare_audit(ma, mb), ma.output_dir);
  return 0;
}

int run_aggregate(const std::string& path, const std::string& method, std::size_t depth,
                  const std::optional<std::string>& output) {
  const Aggregator agg = parse_aggregator(method);
  const auto loaded = load_result_lists(path);
  for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << "\n";
  std::map<std::string, std::vector<RankedList>> by_query;
  for (const auto& [key, list] : loaded.lists) by_query[key.second].push_back(list);

  ResultLists out;
  const std::string label = "aggregate:" + method;
  for (auto& [q, lists] : by_query) {
    std::size_t k = depth;
    if (k == 0) {
      for (const auto& l : lists) k = std::max(k, l.depth());
    }
    const RankedList merged = aggregate(ListCollection{std::move(lists), label}, agg, std::max<std::size_t>(k, 1));
    out.emplace(ListKey{label, q}, RankedList(q, label, merged.items()));
  }
  const std::string text = serialize_result_lists(out);
  if (output) {
    detail::write_atomic(*output, text);
  } else {
    std::cout << text;
  }
  return 0;
}

std::string guess_kind(const std::filesystem::path& path) {
  if (path.extension() == ".jsonl") {
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const json rec = detail::parse_document(line, path.string());
      return rec.contains("rank") ? "lists" : "profiles";
    }
    return "lists";
  }
  const json doc = detail::parse_document(detail::read_file(path), path.string());
  if (doc.contains("attributes")) return "schema";
  if (doc.contains("result_lists") || doc.contains("scenario")) return "manifest";
  return "ground_truth";
}

int run_validate(const std::string& file, std::string kind) {
  const std::filesystem::path path(file);
  if (kind == "auto") kind = guess_kind(path);
  if (kind == "lists") {
    const auto loaded = load_result_lists(path);
    for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << file << ": " << loaded.lists.size() << " result lists\n";
  } else if (kind == "profiles") {
    std::cout << file << ": " << load_profiles(path).size() << " profiles\n";
  } else if (kind == "schema") {
    const auto s = parse_schema(detail::parse_document(detail::read_file(path), file), file);
    std::cout << file << ": " << s.size() << " attributes\n";
  } else if (kind == "ground_truth") {
    const auto g = parse_ground_truth(detail::parse_document(detail::read_file(path), file), file);
    std::cout << file << ": ground truth for " << g.per_query.size() << " queries"
              << (g.fallback ? " plus a default" : "") << "\n";
  } else if (kind == "manifest") {
    const auto m = load_manifest(path);
    resolve_input(m);
    std::cout << file << ": valid " << (m.scenario ? "simulate" : "measure") << " manifest\n";
  } else {
    throw ConfigError("unknown file kind '" + kind + "'");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Measures user, content and combined bias in ranked result lists."};
  app.require_subcommand(1);

  Overrides measure_opts;
  std::string measure_manifest;
  auto* measure = app.add_subcommand("measure", "audit recorded result lists");
  measure->add_option("manifest", measure_manifest)->required();
  measure->add_option("--seed", measure_opts.seed, "resampling seed");
  measure_opts.add_to(measure);

  Overrides sim_opts;
  std::string sim_manifest;
  auto* sim = app.add_subcommand("simulate", "generate a synthetic provider and audit it");
  sim->add_option("manifest", sim_manifest)->required();
  sim->add_option("--seed", sim_opts.seed, "scenario and resampling seed")->required();
  sim_opts.add_to(sim);

  std::string cmp_a, cmp_b;
  std::optional<std::string> cmp_out;
  auto* cmp = app.add_subcommand("compare", "compare two providers over a shared query battery");
  cmp->add_option("manifest-a", cmp_a)->required();
  cmp->add_option("manifest-b", cmp_b)->required();
  cmp->add_option("--output", cmp_out, "report directory");

  std::string agg_file, agg_method;
  std::size_t agg_depth = 0;
  std::optional<std::string> agg_out;
  auto* agg = app.add_subcommand("aggregate", "merge the lists of each query into one");
  agg->add_option("lists-file", agg_file)->required();
  agg->add_option("--method", agg_method)->required()->check(CLI::IsMember({"borda", "median", "kemeny"}));
  agg->add_option("--depth", agg_depth, "output depth, 0 for the longest input");
  agg->add_option("--output", agg_out, "output file, stdout if absent");

  std::string val_file, val_kind = "auto";
  auto* val = app.add_subcommand("validate", "check an input file");
  val->add_option("file", val_file)->required();
  val->add_option("--kind", val_kind)
      ->check(CLI::IsMember({"auto", "lists", "profiles", "schema", "ground_truth", "manifest"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*measure) return run_measure(measure_manifest, measure_opts);
    if (*sim) return run_simulate(sim_manifest, sim_opts);
    if (*cmp) return run_compare(cmp_a, cmp_b, cmp_out);
    if (*agg) return run_aggregate(agg_file, agg_method, agg_depth, agg_out);
    if (*val) return run_validate(val_file, val_kind);
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  }
  return 0;
}
