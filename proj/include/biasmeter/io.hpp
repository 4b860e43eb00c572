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

#pragma once

// File formats, audit orchestration and reports.
//
// Result lists and profiles are line-delimited JSON, one record per line:
//
//   {"user_id":"u1","query_id":"q1","rank":1,"item_id":"x",
//    "annotations":{"stance":{"pro":0.5,"con":0.5}}}
//   {"user_id":"u1","protected":{"gender":"f"},"other":{"age":31,"region":"north"}}
//
// Schemas, ground truth, scenarios and manifests are single JSON documents.
// Reports are written with sorted keys and no timestamps, so an identical
// manifest yields a byte-identical report.json.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "biasmeter/aggregation.hpp"
#include "biasmeter/errors.hpp"
#include "biasmeter/measures.hpp"
#include "biasmeter/simulator.hpp"
#include "biasmeter/stats.hpp"
#include "biasmeter/types.hpp"

namespace biasmeter {

using json = nlohmann::json;

inline constexpr const char* kReportVersion = "1.0";
/// Loader tolerance on annotation weight sums; accepted weights are renormalized.
inline constexpr double kLoadWeightTolerance = 1e-6;

using ResultLists = std::map<ListKey, RankedList>;

// ---------------------------------------------------------------- enums

inline std::string to_string(DistanceKind k) {
  switch (k) {
    case DistanceKind::kendall: return "kendall";
    case DistanceKind::rbo: return "rbo";
    case DistanceKind::topk: return "topk";
    case DistanceKind::distribution: return "distribution";
  }
  return "";
}

inline std::string to_string(Aggregator a) {
  switch (a) {
    case Aggregator::borda: return "borda";
    case Aggregator::median: return "median";
    case Aggregator::kemeny: return "kemeny";
  }
  return "";
}

inline std::string to_string(Weighting w) {
  return w == Weighting::uniform ? "uniform" : "rank_discounted";
}

inline std::string to_string(QueryAggregation q) { return q == QueryAggregation::mean ? "mean" : "max"; }

template <typename Enum>
Enum parse_enum(const std::string& text, std::initializer_list<Enum> options, const char* what) {
  for (Enum e : options) {
    if (to_string(e) == text) return e;
  }
  throw ConfigError(std::string("unknown ") + what + " '" + text + "'");
}

inline DistanceKind parse_distance_kind(const std::string& s) {
  return parse_enum(s, {DistanceKind::kendall, DistanceKind::rbo, DistanceKind::topk, DistanceKind::distribution},
                    "distance");
}
inline Aggregator parse_aggregator(const std::string& s) {
  return parse_enum(s, {Aggregator::borda, Aggregator::median, Aggregator::kemeny}, "aggregator");
}
inline Weighting parse_weighting(const std::string& s) {
  return parse_enum(s, {Weighting::uniform, Weighting::rank_discounted}, "weighting");
}
inline QueryAggregation parse_query_aggregation(const std::string& s) {
  return parse_enum(s, {QueryAggregation::mean, QueryAggregation::max}, "query aggregation");
}

// ---------------------------------------------------------------- helpers

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json parse_document(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(origin + ": " + e.what());
  }
}

/// Writes to a temporary sibling, then renames over the target.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + tmp.string());
    out << content;
    if (!out) throw InputError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

template <typename T>
T field(const json& obj, const char* name, const std::string& where) {
  const auto it = obj.find(name);
  if (it == obj.end()) throw FormatError(where + ": missing field '" + name + "'");
  try {
    return it->template get<T>();
  } catch (const json::exception&) {
    throw FormatError(where + ": field '" + std::string(name) + "' has the wrong type");
  }
}

inline void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError(where + ": unknown field '" + key + "'");
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------- result lists

struct LoadedLists {
  ResultLists lists;
  std::vector<std::string> warnings;
};

inline LoadedLists parse_result_lists(std::istream& in, const std::string& origin = "<lists>") {
  struct Pending {
    std::map<long long, std::pair<ResultItem, std::size_t>> by_rank;  // rank -> (item, line)
  };
  std::map<ListKey, Pending> pending;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = origin + ":" + std::to_string(line_no);
    const json rec = detail::parse_document(line, where);
    if (!rec.is_object()) throw FormatError(where + ": record is not an object");
    const auto user = detail::field<std::string>(rec, "user_id", where);
    const auto query = detail::field<std::string>(rec, "query_id", where);
    const auto rank = detail::field<long long>(rec, "rank", where);
    ResultItem item{detail::field<std::string>(rec, "item_id", where), {}};
    if (user.empty() || query.empty() || item.item_id.empty()) throw FormatError(where + ": empty identifier");
    if (rank < 1) throw FormatError(where + ": rank must be >= 1");
    if (const auto ann = rec.find("annotations"); ann != rec.end()) {
      if (!ann->is_object()) throw FormatError(where + ": annotations must be an object");
      for (const auto& [attr, weights] : ann->items()) {
        if (!weights.is_object()) throw FormatError(where + ": annotation for " + attr + " must be an object");
        Annotation a;
        double total = 0.0;
        for (const auto& [value, w] : weights.items()) {
          if (!w.is_number()) throw FormatError(where + ": weight for " + attr + "=" + value + " is not a number");
          const double x = w.get<double>();
          if (!(x >= 0.0)) throw FormatError(where + ": negative weight for " + attr + "=" + value);
          a[value] = x;
          total += x;
        }
        if (std::abs(total - 1.0) > kLoadWeightTolerance) {
          throw FormatError(where + ": weights for " + attr + " sum to " + format_number(total));
        }
        if (std::abs(total - 1.0) > kWeightTolerance) {
          for (auto& [_, x] : a) x /= total;
        }
        item.annotations[attr] = std::move(a);
      }
    }
    auto& p = pending[ListKey{user, query}];
    if (p.by_rank.count(rank)) {
      throw FormatError(where + ": duplicate rank " + std::to_string(rank) + " for user " + user + ", query " +
                        query + " (first on line " + std::to_string(p.by_rank.at(rank).second) + ")");
    }
    p.by_rank.emplace(rank, std::make_pair(std::move(item), line_no));
  }
  LoadedLists out;
  if (pending.empty()) out.warnings.push_back(origin + ": no result records");
  for (auto& [key, p] : pending) {
    std::vector<ResultItem> items;
    std::set<std::string> ids;
    long long expected = 1;
    for (auto& [rank, entry] : p.by_rank) {
      const std::string where = origin + ":" + std::to_string(entry.second);
      if (rank != expected) {
        throw FormatError(where + ": ranks for user " + key.first + ", query " + key.second +
                          " skip rank " + std::to_string(expected));
      }
      if (!ids.insert(entry.first.item_id).second) {
        throw FormatError(where + ": item " + entry.first.item_id + " appears twice in one list");
      }
      items.push_back(std::move(entry.first));
      ++expected;
    }
    out.lists.emplace(key, RankedList(key.second, key.first, std::move(items)));
  }
  return out;
}

inline LoadedLists load_result_lists(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return parse_result_lists(in, path.string());
}

inline void write_result_lists(std::ostream& out, const ResultLists& lists) {
  for (const auto& [key, list] : lists) {
    for (std::size_t r = 0; r < list.depth(); ++r) {
      const auto& item = list.items()[r];
      json rec{{"user_id", list.user_id()}, {"query_id", list.query_id()}, {"rank", r + 1},
               {"item_id", item.item_id}};
      json ann = json::object();
      for (const auto& [attr, weights] : item.annotations) ann[attr] = weights;
      rec["annotations"] = std::move(ann);
      out << rec.dump() << '\n';
    }
  }
}

inline std::string serialize_result_lists(const ResultLists& lists) {
  std::ostringstream os;
  write_result_lists(os, lists);
  return os.str();
}

// ---------------------------------------------------------------- profiles

inline std::vector<UserProfile> parse_profiles(std::istream& in, const std::string& origin = "<profiles>") {
  std::vector<UserProfile> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = origin + ":" + std::to_string(line_no);
    const json rec = detail::parse_document(line, where);
    if (!rec.is_object()) throw FormatError(where + ": record is not an object");
    UserProfile u;
    u.user_id = detail::field<std::string>(rec, "user_id", where);
    if (const auto p = rec.find("protected"); p != rec.end()) {
      if (!p->is_object()) throw FormatError(where + ": 'protected' must be an object");
      for (const auto& [k, v] : p->items()) {
        if (!v.is_string()) throw FormatError(where + ": protected attribute " + k + " must be a string");
        u.protected_attrs[k] = v.get<std::string>();
      }
    }
    if (const auto o = rec.find("other"); o != rec.end()) {
      if (!o->is_object()) throw FormatError(where + ": 'other' must be an object");
      for (const auto& [k, v] : o->items()) {
        if (v.is_number()) {
          u.other[k] = v.get<double>();
        } else if (v.is_string()) {
          u.other[k] = v.get<std::string>();
        } else {
          throw FormatError(where + ": attribute " + k + " must be a number or a string");
        }
      }
    }
    try {
      validate(u);
    } catch (const InputError& e) {
      throw FormatError(where + ": " + e.what());
    }
    if (!seen.insert(u.user_id).second) throw FormatError(where + ": duplicate user " + u.user_id);
    out.push_back(std::move(u));
  }
  return out;
}

inline std::vector<UserProfile> load_profiles(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return parse_profiles(in, path.string());
}

inline void write_profiles(std::ostream& out, const std::vector<UserProfile>& profiles) {
  for (const auto& u : profiles) {
    json other = json::object();
    for (const auto& [k, v] : u.other) {
      if (const auto* x = std::get_if<double>(&v)) {
        other[k] = *x;
      } else {
        other[k] = std::get<std::string>(v);
      }
    }
    json rec{{"user_id", u.user_id}, {"protected", u.protected_attrs}, {"other", std::move(other)}};
    out << rec.dump() << '\n';
  }
}

// ---------------------------------------------------------------- schema & ground truth

inline std::string to_string(AttributeKind k) {
  return k == AttributeKind::protected_user ? "protected" : "differentiating";
}

inline json to_json(const AttributeSchema& s) {
  return json{{"name", s.name}, {"kind", to_string(s.kind)}, {"values", s.values}};
}

inline AttributeSchema schema_from_json(const json& j, AttributeKind default_kind, const std::string& where) {
  if (!j.is_object()) throw SchemaError(where + ": attribute must be an object");
  AttributeSchema s;
  s.name = detail::field<std::string>(j, "name", where);
  s.values = detail::field<std::vector<std::string>>(j, "values", where);
  s.kind = default_kind;
  if (const auto k = j.find("kind"); k != j.end()) {
    const auto kind = k->get<std::string>();
    if (kind == "protected") {
      s.kind = AttributeKind::protected_user;
    } else if (kind == "differentiating") {
      s.kind = AttributeKind::differentiating_content;
    } else {
      throw SchemaError(where + ": unknown attribute kind '" + kind + "'");
    }
  }
  validate(s);
  return s;
}

inline std::vector<AttributeSchema> parse_schema(const json& doc, const std::string& where = "<schema>") {
  if (!doc.is_object() || !doc.contains("attributes") || !doc["attributes"].is_array()) {
    throw SchemaError(where + ": expected {\"attributes\": [...]}");
  }
  std::vector<AttributeSchema> out;
  std::set<std::string> names;
  for (const auto& a : doc["attributes"]) {
    out.push_back(schema_from_json(a, AttributeKind::differentiating_content, where));
    if (!names.insert(out.back().name).second) throw SchemaError(where + ": attribute " + out.back().name + " repeated");
  }
  return out;
}

struct GroundTruthSet {
  std::optional<GroundTruth> fallback;
  std::map<std::string, GroundTruth> per_query;
};

inline GroundTruthSet parse_ground_truth(const json& doc, const std::string& where = "<ground truth>") {
  if (!doc.is_object()) throw SchemaError(where + ": expected an object");
  GroundTruthSet out;
  const auto attr = detail::field<std::string>(doc, "attribute", where);
  const auto read = [&](const json& probs) {
    GroundTruth gt{attr, {}};
    if (!probs.is_object()) throw SchemaError(where + ": probabilities must be an object");
    for (const auto& [value, p] : probs.items()) {
      if (!p.is_number()) throw SchemaError(where + ": probability of " + value + " is not a number");
      gt.probabilities[value] = p.get<double>();
    }
    return gt;
  };
  if (const auto p = doc.find("probabilities"); p != doc.end()) out.fallback = read(*p);
  if (const auto pq = doc.find("per_query"); pq != doc.end()) {
    for (const auto& [q, probs] : pq->items()) out.per_query[q] = read(probs);
  }
  if (!out.fallback && out.per_query.empty()) throw SchemaError(where + ": no probabilities given");
  return out;
}

inline json to_json(const GroundTruthSet& gts) {
  json j;
  std::string attr = gts.fallback ? gts.fallback->attribute
                                  : (gts.per_query.empty() ? "" : gts.per_query.begin()->second.attribute);
  j["attribute"] = attr;
  if (gts.fallback) j["probabilities"] = gts.fallback->probabilities;
  if (!gts.per_query.empty()) {
    json pq = json::object();
    for (const auto& [q, gt] : gts.per_query) pq[q] = gt.probabilities;
    j["per_query"] = std::move(pq);
  }
  return j;
}

// ---------------------------------------------------------------- configs

inline json to_json(const MeasureConfig& c) {
  json j{{"k", c.k},
         {"distance", to_string(c.dr_kind)},
         {"weighting", to_string(c.weighting)},
         {"aggregator", to_string(c.aggregator)},
         {"query_aggregation", to_string(c.query_aggregation)},
         {"rbo_persistence", c.rbo_persistence},
         {"representative_depth", c.representative_depth},
         {"relevant_attributes", c.user_metric.relevant_attrs},
         {"numeric_ranges", c.user_metric.numeric_ranges},
         {"max_pair_distance", c.max_pair_distance},
         {"variant_radius", c.variant_radius}};
  j["epsilon"] = c.epsilon ? json(*c.epsilon) : json(nullptr);
  return j;
}

inline MeasureConfig measure_config_from_json(const json& j) {
  detail::check_keys(j,
                     {"epsilon", "k", "distance", "weighting", "aggregator", "query_aggregation",
                      "rbo_persistence", "representative_depth", "relevant_attributes", "numeric_ranges",
                      "max_pair_distance", "variant_radius"},
                     "config");
  MeasureConfig c;
  try {
    if (j.contains("epsilon") && !j["epsilon"].is_null()) c.epsilon = j["epsilon"].get<double>();
    if (j.contains("k")) c.k = j["k"].get<std::size_t>();
    if (j.contains("distance")) c.dr_kind = parse_distance_kind(j["distance"].get<std::string>());
    if (j.contains("weighting")) c.weighting = parse_weighting(j["weighting"].get<std::string>());
    if (j.contains("aggregator")) c.aggregator = parse_aggregator(j["aggregator"].get<std::string>());
    if (j.contains("query_aggregation")) {
      c.query_aggregation = parse_query_aggregation(j["query_aggregation"].get<std::string>());
    }
    if (j.contains("rbo_persistence")) c.rbo_persistence = j["rbo_persistence"].get<double>();
    if (j.contains("representative_depth")) c.representative_depth = j["representative_depth"].get<std::size_t>();
    if (j.contains("relevant_attributes")) {
      c.user_metric.relevant_attrs = j["relevant_attributes"].get<std::vector<std::string>>();
    }
    if (j.contains("numeric_ranges")) {
      c.user_metric.numeric_ranges = j["numeric_ranges"].get<std::map<std::string, double>>();
    }
    if (j.contains("max_pair_distance")) c.max_pair_distance = j["max_pair_distance"].get<double>();
    if (j.contains("variant_radius")) c.variant_radius = j["variant_radius"].get<double>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  validate(c);
  return c;
}

inline json to_json(const ScenarioConfig& s) {
  json others = json::array();
  for (const auto& a : s.other_attrs) {
    if (a.numeric) {
      others.push_back(json{{"name", a.name}, {"kind", "numeric"}, {"min", a.min}, {"max", a.max}});
    } else {
      others.push_back(json{{"name", a.name}, {"kind", "categorical"}, {"values", a.values}});
    }
  }
  json queries = json::array();
  for (const auto& q : s.queries) {
    queries.push_back(json{{"query_id", q.query_id},
                           {"attribute", json{{"name", q.attribute.name}, {"values", q.attribute.values}}},
                           {"ground_truth", q.ground_truth.probabilities}});
  }
  return json{{"n_users", s.n_users},
              {"seed", s.seed},
              {"protected_attribute", json{{"name", s.protected_attr.name}, {"values", s.protected_attr.values}}},
              {"other_attributes", std::move(others)},
              {"queries", std::move(queries)},
              {"list_depth", s.list_depth},
              {"content_shift", json{{"protected", s.content_shift_protected},
                                     {"unprotected", s.content_shift_unprotected}}},
              {"ranking_divergence", s.ranking_divergence},
              {"item_pool_size", s.item_pool_size},
              {"stream_key", s.stream_key == StreamKey::user ? "user" : "profile"}};
}

inline ScenarioConfig scenario_from_json(const json& j) {
  detail::check_keys(j,
                     {"n_users", "seed", "protected_attribute", "other_attributes", "differentiating_attribute",
                      "queries", "list_depth", "content_shift", "content_bias", "ranking_divergence",
                      "item_pool_size", "stream_key"},
                     "scenario");
  ScenarioConfig s;
  try {
    if (j.contains("n_users")) s.n_users = j["n_users"].get<std::size_t>();
    if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("protected_attribute")) {
      s.protected_attr = schema_from_json(j["protected_attribute"], AttributeKind::protected_user, "scenario");
      s.protected_attr.kind = AttributeKind::protected_user;
    }
    if (j.contains("other_attributes")) {
      for (const auto& a : j["other_attributes"]) {
        OtherAttributeSpec spec;
        spec.name = a.at("name").get<std::string>();
        const auto kind = a.value("kind", std::string(a.contains("values") ? "categorical" : "numeric"));
        spec.numeric = kind == "numeric";
        if (!spec.numeric && kind != "categorical") throw ConfigError("unknown attribute kind '" + kind + "'");
        if (spec.numeric) {
          spec.min = a.at("min").get<double>();
          spec.max = a.at("max").get<double>();
        } else {
          spec.values = a.at("values").get<std::vector<std::string>>();
        }
        s.other_attrs.push_back(std::move(spec));
      }
    }
    std::optional<AttributeSchema> shared;
    if (j.contains("differentiating_attribute")) {
      shared = schema_from_json(j["differentiating_attribute"], AttributeKind::differentiating_content, "scenario");
    }
    if (j.contains("queries")) {
      for (const auto& q : j["queries"]) {
        QuerySpec spec;
        spec.query_id = q.at("query_id").get<std::string>();
        if (q.contains("attribute")) {
          spec.attribute = schema_from_json(q["attribute"], AttributeKind::differentiating_content, "scenario");
        } else if (shared) {
          spec.attribute = *shared;
        } else {
          throw ConfigError("scenario query " + spec.query_id + " has no attribute");
        }
        spec.attribute.kind = AttributeKind::differentiating_content;
        spec.ground_truth.attribute = spec.attribute.name;
        spec.ground_truth.probabilities = q.at("ground_truth").get<std::map<std::string, double>>();
        s.queries.push_back(std::move(spec));
      }
    }
    if (j.contains("list_depth")) s.list_depth = j["list_depth"].get<std::size_t>();
    if (j.contains("content_bias")) s.set_content_bias(j["content_bias"].get<double>());
    if (j.contains("content_shift")) {
      s.content_shift_protected = j["content_shift"].value("protected", 0.0);
      s.content_shift_unprotected = j["content_shift"].value("unprotected", 0.0);
    }
    if (j.contains("ranking_divergence")) s.ranking_divergence = j["ranking_divergence"].get<double>();
    if (j.contains("item_pool_size")) s.item_pool_size = j["item_pool_size"].get<std::size_t>();
    if (j.contains("stream_key")) {
      const auto key = j["stream_key"].get<std::string>();
      if (key == "user") {
        s.stream_key = StreamKey::user;
      } else if (key == "profile") {
        s.stream_key = StreamKey::profile;
      } else {
        throw ConfigError("unknown stream_key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  } catch (const SchemaError& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
  validate(s);
  return s;
}

// ---------------------------------------------------------------- manifest

struct SignificanceConfig {
  std::size_t permutations = 0;  // 0 disables the permutation test
  std::size_t bootstrap_resamples = 0;
  double confidence_level = 0.95;
  std::uint64_t seed = 0;
};

struct AuditManifest {
  std::filesystem::path profiles;
  std::filesystem::path result_lists;
  std::filesystem::path schema;
  std::optional<std::filesystem::path> ground_truth;
  ProtectedClass protected_class;
  std::string differentiating_attribute;
  MeasureConfig config;
  std::vector<std::string> measures;  // empty: all
  SignificanceConfig significance;
  std::optional<ScenarioConfig> scenario;
  std::optional<std::filesystem::path> output_dir;
};

inline const std::vector<std::string>& all_measure_names() {
  static const std::vector<std::string> names = {
      "individual_user_bias", "group_user_bias", "probabilistic_group_bias",
      "content_bias",         "combined_bias",   "echo_chamber_test"};
  return names;
}

inline AuditManifest manifest_from_json(const json& j, const std::filesystem::path& base_dir = {}) {
  detail::check_keys(j,
                     {"profiles", "result_lists", "schema", "ground_truth", "protected", "differentiating_attribute",
                      "config", "measures", "significance", "scenario", "output_dir"},
                     "manifest");
  AuditManifest m;
  const auto path = [&](const char* key) {
    std::filesystem::path p = j.at(key).get<std::string>();
    return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  };
  try {
    const bool has_lists = j.contains("result_lists");
    const bool has_scenario = j.contains("scenario");
    if (has_lists == has_scenario) {
      throw ConfigError("manifest needs exactly one of 'result_lists' and 'scenario'");
    }
    if (has_lists) {
      m.result_lists = path("result_lists");
      if (!j.contains("profiles") || !j.contains("schema")) {
        throw ConfigError("manifest with result_lists also needs 'profiles' and 'schema'");
      }
      m.profiles = path("profiles");
      m.schema = path("schema");
      if (j.contains("ground_truth")) m.ground_truth = path("ground_truth");
      if (!j.contains("protected") || !j.contains("differentiating_attribute")) {
        throw ConfigError("manifest needs 'protected' and 'differentiating_attribute'");
      }
    } else {
      m.scenario = scenario_from_json(j["scenario"]);
    }
    if (j.contains("protected")) {
      m.protected_class.attribute = j["protected"].at("attribute").get<std::string>();
      m.protected_class.value = j["protected"].at("value").get<std::string>();
    }
    if (j.contains("differentiating_attribute")) {
      m.differentiating_attribute = j["differentiating_attribute"].get<std::string>();
    }
    if (j.contains("config")) m.config = measure_config_from_json(j["config"]);
    if (j.contains("measures")) {
      m.measures = j["measures"].get<std::vector<std::string>>();
      for (const auto& name : m.measures) {
        const auto& all = all_measure_names();
        if (std::find(all.begin(), all.end(), name) == all.end()) {
          throw ConfigError("unknown measure '" + name + "'");
        }
      }
    }
    if (j.contains("significance")) {
      const auto& s = j["significance"];
      detail::check_keys(s, {"permutations", "bootstrap_resamples", "confidence_level", "seed"}, "significance");
      m.significance.permutations = s.value("permutations", std::size_t{0});
      m.significance.bootstrap_resamples = s.value("bootstrap_resamples", std::size_t{0});
      m.significance.confidence_level = s.value("confidence_level", 0.95);
      m.significance.seed = s.value("seed", std::uint64_t{0});
    }
    if (j.contains("output_dir")) m.output_dir = path("output_dir");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("manifest: ") + e.what());
  }
  return m;
}

inline AuditManifest load_manifest(const std::filesystem::path& path) {
  const json doc = detail::parse_document(detail::read_file(path), path.string());
  return manifest_from_json(doc, path.parent_path());
}

/// Profiles, lists and ground truth of a scenario as files next to each
/// other: profiles.jsonl, lists.jsonl, schema.json, ground_truth.json.
inline void write_simulation(const std::filesystem::path& dir, const ScenarioConfig& cfg, const AuditInput& in) {
  std::ostringstream profiles, lists;
  write_profiles(profiles, in.profiles);
  write_result_lists(lists, in.lists);
  detail::write_atomic(dir / "profiles.jsonl", profiles.str());
  detail::write_atomic(dir / "lists.jsonl", lists.str());
  json schema{{"attributes", json::array({to_json(cfg.protected_attr), to_json(in.differentiating_attr)})}};
  detail::write_atomic(dir / "schema.json", schema.dump(2) + "\n");
  GroundTruthSet gts;
  gts.per_query = in.query_ground_truth;
  detail::write_atomic(dir / "ground_truth.json", to_json(gts).dump(2) + "\n");
}

/// Resolves a manifest to an audit input: loads files, or runs the scenario.
inline AuditInput resolve_input(const AuditManifest& m) {
  if (m.scenario) {
    AuditInput in = simulate(*m.scenario, m.config);
    return in;
  }
  AuditInput in;
  in.profiles = load_profiles(m.profiles);
  in.lists = load_result_lists(m.result_lists).lists;
  const auto schema = parse_schema(detail::parse_document(detail::read_file(m.schema), m.schema.string()),
                                   m.schema.string());
  const auto attr = std::find_if(schema.begin(), schema.end(),
                                 [&](const AttributeSchema& s) { return s.name == m.differentiating_attribute; });
  if (attr == schema.end()) {
    throw SchemaError("differentiating attribute '" + m.differentiating_attribute + "' not in schema");
  }
  in.differentiating_attr = *attr;
  in.differentiating_attr.kind = AttributeKind::differentiating_content;
  in.protected_class = m.protected_class;
  if (m.ground_truth) {
    const auto gts = parse_ground_truth(
        detail::parse_document(detail::read_file(*m.ground_truth), m.ground_truth->string()),
        m.ground_truth->string());
    in.ground_truth = gts.fallback;
    in.query_ground_truth = gts.per_query;
  }
  for (const auto& [key, list] : in.lists) {
    for (const auto& item : list.items()) {
      for (const auto& [attr_name, _] : item.annotations) {
        if (std::none_of(schema.begin(), schema.end(), [&](const AttributeSchema& s) { return s.name == attr_name; })) {
          throw SchemaError("item " + item.item_id + " annotated with undeclared attribute " + attr_name);
        }
      }
    }
  }
  in.config = m.config;
  return in;
}

// ---------------------------------------------------------------- reports

struct MeasureEntry {
  std::string name;
  std::string status;  // "ok", "skipped" or "error"
  std::string reason;
  std::optional<BiasVerdict> verdict;
  std::optional<SignificanceResult> significance;
  std::optional<BootstrapInterval> interval;
};

struct AuditReport {
  std::string mode;
  json config;
  std::vector<MeasureEntry> measures;
  std::map<std::string, double> attribute_balance;
  std::map<std::string, std::string> notes;

  const MeasureEntry* find(const std::string& name) const {
    for (const auto& e : measures) {
      if (e.name == name) return &e;
    }
    return nullptr;
  }
};

inline json to_json(const BiasVerdict& v) {
  return json{{"measure", v.measure_name}, {"magnitude", v.magnitude}, {"threshold", v.threshold},
              {"biased", v.biased},        {"per_query", v.per_query},  {"diagnostics", v.diagnostics}};
}

inline json to_json(const SignificanceResult& s) {
  return json{{"observed", s.observed},
              {"p_value", s.p_value},
              {"n_permutations", s.n_permutations},
              {"seed", s.seed},
              {"null", json{{"mean", s.null_distribution.mean},
                            {"sd", s.null_distribution.sd},
                            {"q05", s.null_distribution.q05},
                            {"q50", s.null_distribution.q50},
                            {"q95", s.null_distribution.q95}}}};
}

inline json to_json(const BootstrapInterval& b) {
  return json{{"estimate", b.estimate}, {"lo", b.lo}, {"hi", b.hi}, {"confidence_level", b.confidence_level},
              {"n_resamples", b.n_resamples}, {"seed", b.seed}};
}

inline json to_json(const AuditReport& r) {
  json measures = json::array();
  for (const auto& e : r.measures) {
    json m{{"name", e.name}, {"status", e.status}};
    if (!e.reason.empty()) m["reason"] = e.reason;
    if (e.verdict) m["verdict"] = to_json(*e.verdict);
    if (e.significance) m["significance"] = to_json(*e.significance);
    if (e.interval) m["bootstrap"] = to_json(*e.interval);
    measures.push_back(std::move(m));
  }
  return json{{"report_version", kReportVersion}, {"mode", r.mode},
              {"config", r.config},                {"measures", std::move(measures)},
              {"attribute_balance", r.attribute_balance}, {"notes", r.notes}};
}

inline std::string report_text(const AuditReport& r) {
  std::ostringstream os;
  os << "bias audit (" << r.mode << ")\n";
  for (const auto& e : r.measures) {
    os << "  " << std::left << std::setw(44) << e.name << ' ';
    if (e.status != "ok") {
      os << e.status << ": " << e.reason << '\n';
      continue;
    }
    const auto& v = *e.verdict;
    os << "magnitude " << format_number(v.magnitude) << " (threshold " << format_number(v.threshold) << ") "
       << (v.biased ? "BIASED" : "unbiased");
    if (e.significance) os << ", p = " << format_number(e.significance->p_value);
    if (e.interval) {
      os << ", " << format_number(e.interval->confidence_level * 100) << "% CI [" << format_number(e.interval->lo)
         << ", " << format_number(e.interval->hi) << "]";
    }
    if (const auto it = v.diagnostics.find("echo_chamber"); it != v.diagnostics.end()) {
      os << ", echo chamber " << (it->second == "true" ? "FLAGGED" : "not flagged");
    }
    os << '\n';
  }
  if (!r.attribute_balance.empty()) {
    os << "attribute balance between classes (diagnostic):\n";
    for (const auto& [name, d] : r.attribute_balance) os << "  " << name << ": " << format_number(d) << '\n';
  }
  for (const auto& [k, v] : r.notes) os << "note: " << k << ": " << v << '\n';
  return os.str();
}

/// measure, query, magnitude rows for plotting.
inline std::string report_table(const AuditReport& r) {
  std::ostringstream os;
  os << "measure\tquery\tmagnitude\n";
  for (const auto& e : r.measures) {
    if (!e.verdict) continue;
    for (const auto& [q, v] : e.verdict->per_query) os << e.name << '\t' << q << '\t' << format_number(v) << '\n';
  }
  return os.str();
}

inline void write_report(const AuditReport& r, const std::filesystem::path& dir) {
  detail::write_atomic(dir / "report.json", to_json(r).dump(2) + "\n");
  detail::write_atomic(dir / "summary.txt", report_text(r));
  detail::write_atomic(dir / "per_query.tsv", report_table(r));
}

// ---------------------------------------------------------------- orchestration

namespace detail {

// Resampling runs once for all successful measures so they share replicates.
// If the joint run fails, each measure is retried alone and keeps its own error.
inline void attach_resampling(const AuditInput& in, const SignificanceConfig& sig,
                              const std::vector<std::pair<std::size_t, Measure>>& ok, AuditReport& report) {
  const auto fail = [&](std::size_t idx, const std::exception& ex) {
    auto& e = report.measures[idx];
    if (dynamic_cast<const SmallSampleError*>(&ex) != nullptr) {
      e.reason = ex.what();
    } else if (dynamic_cast<const UndefinedMeasureError*>(&ex) != nullptr ||
               dynamic_cast<const ComplexityError*>(&ex) != nullptr) {
      e = MeasureEntry{e.name, "error", ex.what(), {}, {}, {}};
    } else {
      throw;
    }
  };
  std::vector<std::size_t> perm_idx, boot_idx;
  std::vector<Measure> perm, boot;
  for (const auto& [idx, m] : ok) {
    if (sig.permutations > 0 && is_permutation_measure(m)) {
      perm_idx.push_back(idx);
      perm.push_back(m);
    }
    if (sig.bootstrap_resamples > 0 && m != Measure::individual_user_bias) {
      boot_idx.push_back(idx);
      boot.push_back(m);
    }
  }
  try {
    const auto res = permutation_tests(in, perm, sig.permutations, sig.seed);
    for (std::size_t i = 0; i < res.size(); ++i) report.measures[perm_idx[i]].significance = res[i];
  } catch (const Error&) {
    for (std::size_t i = 0; i < perm.size(); ++i) {
      try {
        report.measures[perm_idx[i]].significance = permutation_test(in, perm[i], sig.permutations, sig.seed);
      } catch (const Error& ex) {
        fail(perm_idx[i], ex);
      }
    }
  }
  const auto still_ok = [&](std::size_t idx) { return report.measures[idx].status == "ok"; };
  try {
    const auto res = bootstrap_cis(in, boot, sig.bootstrap_resamples, sig.confidence_level, sig.seed);
    for (std::size_t i = 0; i < res.size(); ++i) {
      if (still_ok(boot_idx[i])) report.measures[boot_idx[i]].interval = res[i];
    }
  } catch (const Error&) {
    for (std::size_t i = 0; i < boot.size(); ++i) {
      if (!still_ok(boot_idx[i])) continue;
      try {
        report.measures[boot_idx[i]].interval =
            bootstrap_ci(in, boot[i], sig.bootstrap_resamples, sig.confidence_level, sig.seed);
      } catch (const Error& ex) {
        fail(boot_idx[i], ex);
      }
    }
  }
}

}  // namespace detail

/// Runs every requested measure on an audit input. Ground-truth measures are
/// listed as skipped without ground truth; individual bias is skipped when no
/// relevant attributes are configured for D_u.
inline AuditReport run_audit(const AuditInput& in, const std::vector<std::string>& requested,
                             const SignificanceConfig& sig, std::string mode = "measure") {
  const auto& names = requested.empty() ? all_measure_names() : requested;
  AuditReport report;
  report.mode = std::move(mode);
  report.config = to_json(in.config);
  report.config["significance"] = json{{"permutations", sig.permutations},
                                       {"bootstrap_resamples", sig.bootstrap_resamples},
                                       {"confidence_level", sig.confidence_level},
                                       {"seed", sig.seed}};
  report.attribute_balance = attribute_balance(in);
  report.notes["sampling_unit"] = "users (queries of one user are not independent)";
  if (!in.config.epsilon) report.notes["epsilon"] = "defaults: 0.05 distribution-based, 0.1 list-space";

  std::vector<std::pair<std::size_t, Measure>> ok_measures;
  const auto run = [&](const std::string& name, Measure measure, const std::function<BiasVerdict()>& fn,
                       const char* skip_reason) {
    MeasureEntry e;
    e.name = name;
    if (skip_reason != nullptr) {
      e.status = "skipped";
      e.reason = skip_reason;
      report.measures.push_back(std::move(e));
      return;
    }
    try {
      e.verdict = fn();
      e.status = "ok";
      ok_measures.emplace_back(report.measures.size(), measure);
    } catch (const UndefinedMeasureError& ex) {
      e = MeasureEntry{name, "error", ex.what(), {}, {}, {}};
    } catch (const ComplexityError& ex) {
      e = MeasureEntry{name, "error", ex.what(), {}, {}, {}};
    }
    report.measures.push_back(std::move(e));
  };

  const bool gt = in.has_ground_truth();
  const char* no_gt = gt ? nullptr : "no ground truth supplied";
  for (const auto& name : names) {
    if (name == "individual_user_bias") {
      run(name, Measure::individual_user_bias, [&] { return individual_user_bias(in); },
          in.config.user_metric.relevant_attrs.empty() ? "no relevant attributes configured for the user distance"
                                                       : nullptr);
    } else if (name == "group_user_bias") {
      run(name, Measure::group_user_bias, [&] { return group_user_bias(in); }, nullptr);
    } else if (name == "probabilistic_group_bias") {
      run(name, Measure::probabilistic_group_bias, [&] { return probabilistic_group_bias(in); }, nullptr);
    } else if (name == "content_bias") {
      run("content_bias_protected", Measure::content_bias_protected,
          [&] { return content_bias(in, UserClass::protected_class); }, no_gt);
      run("content_bias_unprotected", Measure::content_bias_unprotected,
          [&] { return content_bias(in, UserClass::unprotected_class); }, no_gt);
    } else if (name == "combined_bias") {
      run(name, Measure::combined_bias_classes,
          [&] { return combined_bias(in, Subject::protected_class(), Subject::unprotected_class()); }, nullptr);
    } else if (name == "echo_chamber_test") {
      run(name, Measure::echo_chamber, [&] { return echo_chamber_test(in); }, no_gt);
    } else {
      throw ConfigError("unknown measure '" + name + "'");
    }
  }
  if (std::none_of(report.measures.begin(), report.measures.end(),
                   [](const MeasureEntry& e) { return e.status != "skipped"; })) {
    throw ConfigError("no applicable measures for this audit");
  }
  detail::attach_resampling(in, sig, ok_measures, report);
  return report;
}

inline AuditReport run_audit(const AuditManifest& m) {
  const AuditInput in = resolve_input(m);
  AuditReport report = run_audit(in, m.measures, m.significance, m.scenario ? "simulate" : "measure");
  if (m.scenario) report.config["scenario"] = to_json(*m.scenario);
  if (m.output_dir) write_report(report, *m.output_dir);
  return report;
}

/// Representative list per query over all users regardless of class.
inline std::map<std::string, RankedList> population_representative_lists(const AuditInput& in) {
  std::map<std::string, std::vector<RankedList>> by_query;
  std::map<std::string, std::size_t> depth;
  for (const auto& [key, list] : in.lists) {
    by_query[key.second].push_back(list);
    depth[key.second] = std::max(depth[key.second], list.depth());
  }
  std::map<std::string, RankedList> out;
  for (auto& [q, lists] : by_query) {
    std::size_t k = std::max<std::size_t>(1, depth[q]);
    if (in.config.representative_depth > 0) k = std::min(k, in.config.representative_depth);
    out.emplace(q, aggregate(ListCollection{std::move(lists), "all"}, in.config.aggregator, k));
  }
  return out;
}

/// Compares two providers at the class-representative level (P, P-bar) and
/// over the whole population, on both the distribution and the list channel.
inline AuditReport compare_audit(const AuditInput& a, const AuditInput& b) {
  if (a.differentiating_attr.name != b.differentiating_attr.name ||
      a.differentiating_attr.values != b.differentiating_attr.values) {
    throw SchemaError("the two audits use different differentiating attributes");
  }
  std::set<std::string> qa, qb;
  for (const auto& [key, _] : a.lists) qa.insert(key.second);
  for (const auto& [key, _] : b.lists) qb.insert(key.second);
  if (std::none_of(qa.begin(), qa.end(), [&](const std::string& q) { return qb.count(q) > 0; })) {
    throw InputError("the two providers share no queries");
  }
  AuditReport report;
  report.mode = "compare";
  report.config = to_json(a.config);
  const auto add = [&](const std::string& scope, const std::map<std::string, RankedList>& la,
                       const std::map<std::string, RankedList>& lb) {
    const auto r = comparative_bias(la, lb, a.differentiating_attr, a.config);
    report.measures.push_back(MeasureEntry{"comparative_bias.distribution[" + scope + "]", "ok", "", r.distribution, {}, {}});
    report.measures.push_back(MeasureEntry{"comparative_bias.list[" + scope + "]", "ok", "", r.list_space, {}, {}});
  };
  add("P", class_representative_lists(a, UserClass::protected_class),
      class_representative_lists(b, UserClass::protected_class));
  add("P-bar", class_representative_lists(a, UserClass::unprotected_class),
      class_representative_lists(b, UserClass::unprotected_class));
  add("all", population_representative_lists(a), population_representative_lists(b));
  return report;
}

inline AuditReport compare_audit(const AuditManifest& ma, const AuditManifest& mb) {
  AuditReport report = compare_audit(resolve_input(ma), resolve_input(mb));
  if (ma.output_dir) write_report(report, *ma.output_dir);
  return report;
}

}  // namespace biasmeter
