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

// Synthetic information provider with controllable bias injection.
//
// Profiles come in matched pairs: each base profile is cloned with the
// protected attribute flipped, so the two classes are identical on every
// other attribute. serve() is the black box under audit:
//
//  * every query owns a pool of item_pool_size items and a base template
//    order of that pool; class P-bar ranks by the base template, class P by
//    the base template with each disjoint adjacent pair (0,1), (2,3), ...
//    swapped with probability ranking_divergence (decided once per query);
//  * a list is list_depth pool items drawn without replacement, shown in the
//    order of the user's class template;
//  * each shown item is annotated with one value of the query's attribute,
//    drawn from ground truth with a_1 shifted by the class's content shift and
//    the other values rescaled proportionally.
//
// All randomness is keyed by (seed, purpose, labels) through derive_key, so
// serve() is a pure function of (config, profile, query).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "biasmeter/distance.hpp"
#include "biasmeter/errors.hpp"
#include "biasmeter/measures.hpp"
#include "biasmeter/random.hpp"
#include "biasmeter/types.hpp"

namespace biasmeter {

struct OtherAttributeSpec {
  std::string name;
  bool numeric = false;
  std::vector<std::string> values;  // categorical
  double min = 0.0;                 // numeric
  double max = 1.0;
};

struct QuerySpec {
  std::string query_id;
  AttributeSchema attribute;
  GroundTruth ground_truth;
};

/// Which identity keys a list's random stream.
enum class StreamKey {
  user,     // every user gets an independent draw
  profile,  // users equal on all non-protected attributes share the draw
};

struct ScenarioConfig {
  std::size_t n_users = 100;
  AttributeSchema protected_attr{"group", {"P", "Q"}, AttributeKind::protected_user};
  std::vector<OtherAttributeSpec> other_attrs;
  std::vector<QuerySpec> queries;
  std::size_t list_depth = 10;
  /// Signed shift on Pr_T(a_1) for class P and for class P-bar.
  double content_shift_protected = 0.0;
  double content_shift_unprotected = 0.0;
  double ranking_divergence = 0.0;
  std::size_t item_pool_size = 20;
  std::uint64_t seed = 0;
  StreamKey stream_key = StreamKey::user;

  /// Symmetric injection: +delta for P, -delta for P-bar.
  void set_content_bias(double delta) {
    content_shift_protected = delta;
    content_shift_unprotected = -delta;
  }
};

inline std::vector<double> shifted_distribution(const std::vector<double>& truth, double shift) {
  std::vector<double> out(truth);
  const double first = truth.front() + shift;
  if (first < -kWeightTolerance || first > 1.0 + kWeightTolerance) {
    throw ParameterError("content shift moves Pr(a_1) outside [0, 1]");
  }
  out.front() = std::clamp(first, 0.0, 1.0);
  const double rest = 1.0 - truth.front();
  if (rest <= kWeightTolerance) {
    if (std::abs(shift) > kWeightTolerance) {
      throw ParameterError("cannot shift mass away from a_1 when Pr_T(a_1) = 1");
    }
    return out;
  }
  const double scale = (1.0 - out.front()) / rest;
  for (std::size_t i = 1; i < out.size(); ++i) out[i] = truth[i] * scale;
  return out;
}

inline void validate(const ScenarioConfig& cfg) {
  if (cfg.n_users < 2) throw ParameterError("scenario needs at least 2 users");
  validate(cfg.protected_attr);
  if (cfg.list_depth == 0) throw ParameterError("list depth must be >= 1");
  if (cfg.item_pool_size < cfg.list_depth) throw ParameterError("item pool smaller than list depth");
  if (!(cfg.ranking_divergence >= 0.0 && cfg.ranking_divergence <= 1.0)) {
    throw ParameterError("ranking divergence must lie in [0, 1]");
  }
  if (cfg.queries.empty()) throw ParameterError("scenario has an empty query battery");
  std::map<std::string, int> seen;
  for (const auto& q : cfg.queries) {
    if (q.query_id.empty() || seen[q.query_id]++) throw ParameterError("query ids must be unique and non-empty");
    check_differentiating(q.attribute);
    const auto truth = ground_truth_vector(q.ground_truth, q.attribute);
    shifted_distribution(truth, cfg.content_shift_protected);
    shifted_distribution(truth, cfg.content_shift_unprotected);
  }
  for (const auto& a : cfg.other_attrs) {
    if (a.name.empty() || a.name == cfg.protected_attr.name) throw ParameterError("bad attribute name '" + a.name + "'");
    if (a.numeric ? !(a.max > a.min) : a.values.empty()) {
      throw ParameterError("attribute " + a.name + " has an empty value range");
    }
  }
}

inline std::string pair_user_id(std::size_t pair, bool protected_side) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "u%06zu%c", pair, protected_side ? 'a' : 'b');
  return buf;
}

/// Matched pairs: n_users / 2 sampled base profiles, each paired with a clone
/// whose protected attribute is flipped. Class P takes protected value 0.
inline std::vector<UserProfile> generate_profiles(const ScenarioConfig& cfg) {
  validate(cfg);
  if (cfg.n_users % 2 != 0) throw ParameterError("matched-pair profiles need an even n_users");
  std::vector<UserProfile> out;
  out.reserve(cfg.n_users);
  for (std::size_t pair = 0; pair < cfg.n_users / 2; ++pair) {
    SplitMix64 rng(derive_key(cfg.seed, "profile", static_cast<std::uint64_t>(pair)));
    UserProfile base;
    for (const auto& a : cfg.other_attrs) {
      if (a.numeric) {
        base.other[a.name] = a.min + (a.max - a.min) * rng.uniform();
      } else {
        base.other[a.name] = a.values[rng.below(a.values.size())];
      }
    }
    UserProfile p = base, q = base;
    p.user_id = pair_user_id(pair, true);
    p.protected_attrs[cfg.protected_attr.name] = cfg.protected_attr.values[0];
    q.user_id = pair_user_id(pair, false);
    q.protected_attrs[cfg.protected_attr.name] = cfg.protected_attr.values[1];
    out.push_back(std::move(p));
    out.push_back(std::move(q));
  }
  return out;
}

inline std::vector<QuerySpec> generate_queries(const ScenarioConfig& cfg) {
  validate(cfg);
  return cfg.queries;
}

inline const QuerySpec& find_query(const ScenarioConfig& cfg, const std::string& query_id) {
  for (const auto& q : cfg.queries) {
    if (q.query_id == query_id) return q;
  }
  throw InputError("query '" + query_id + "' is not in the scenario battery");
}

inline std::string pool_item_id(const std::string& query_id, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, ":i%05zu", i);
  return query_id + buf;
}

/// The ranking template of the item pool for one class.
inline std::vector<std::string> class_template(const ScenarioConfig& cfg, const std::string& query_id,
                                               UserClass cls) {
  find_query(cfg, query_id);
  std::vector<std::size_t> order(cfg.item_pool_size);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  SplitMix64 rng(derive_key(cfg.seed, "template", query_id));
  shuffle(order, rng);
  if (cls == UserClass::protected_class) {
    SplitMix64 swaps(derive_key(cfg.seed, "divergence", query_id));
    for (std::size_t i = 0; i + 1 < order.size(); i += 2) {
      if (swaps.bernoulli(cfg.ranking_divergence)) std::swap(order[i], order[i + 1]);
    }
  }
  std::vector<std::string> out;
  out.reserve(order.size());
  for (std::size_t i : order) out.push_back(pool_item_id(query_id, i));
  return out;
}

inline UserClass class_of(const ScenarioConfig& cfg, const UserProfile& profile) {
  const auto it = profile.protected_attrs.find(cfg.protected_attr.name);
  if (it == profile.protected_attrs.end()) {
    throw ProfileError("user " + profile.user_id + " lacks protected attribute " + cfg.protected_attr.name);
  }
  return it->second == cfg.protected_attr.values[0] ? UserClass::protected_class : UserClass::unprotected_class;
}

/// Canonical text of the non-protected attributes, used as a stream label.
inline std::string profile_signature(const UserProfile& profile) {
  std::string sig;
  for (const auto& [name, value] : profile.other) {
    sig += name;
    sig += '=';
    if (const auto* x = std::get_if<double>(&value)) {
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", *x);
      sig += buf;
    } else {
      sig += std::get<std::string>(value);
    }
    sig += ';';
  }
  return sig;
}

/// The list the synthetic provider returns to `profile` for `query_id`.
inline RankedList serve(const ScenarioConfig& cfg, const UserProfile& profile, const std::string& query_id) {
  const QuerySpec& q = find_query(cfg, query_id);
  const UserClass cls = class_of(cfg, profile);
  const auto tmpl = class_template(cfg, query_id, cls);
  const auto truth = ground_truth_vector(q.ground_truth, q.attribute);
  const auto probs = shifted_distribution(truth, cls == UserClass::protected_class
                                                     ? cfg.content_shift_protected
                                                     : cfg.content_shift_unprotected);
  const std::uint64_t key = cfg.stream_key == StreamKey::user
                                ? derive_key(cfg.seed, "serve", profile.user_id, query_id)
                                : derive_key(cfg.seed, "serve-profile", profile_signature(profile), query_id);
  SplitMix64 rng(key);

  // Partial Fisher-Yates: the first list_depth slots are a uniform sample.
  std::vector<std::size_t> pos(cfg.item_pool_size);
  for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = i;
  for (std::size_t i = 0; i < cfg.list_depth; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pos.size() - i));
    std::swap(pos[i], pos[j]);
  }
  pos.resize(cfg.list_depth);
  std::sort(pos.begin(), pos.end());

  std::vector<ResultItem> items;
  items.reserve(pos.size());
  for (std::size_t p : pos) {
    const double u = rng.uniform();
    std::size_t value = probs.size() - 1;
    double acc = 0.0;
    for (std::size_t v = 0; v < probs.size(); ++v) {
      acc += probs[v];
      if (u < acc) {
        value = v;
        break;
      }
    }
    ResultItem item{tmpl[p], {}};
    item.annotations[q.attribute.name][q.attribute.values[value]] = 1.0;
    items.push_back(std::move(item));
  }
  return RankedList(query_id, profile.user_id, std::move(items));
}

/// Profiles, lists and ground truth of a scenario, ready to audit. All
/// queries must share one differentiating attribute.
inline AuditInput simulate(const ScenarioConfig& cfg, MeasureConfig config = {}) {
  validate(cfg);
  AuditInput in;
  in.profiles = generate_profiles(cfg);
  const auto queries = generate_queries(cfg);
  in.differentiating_attr = queries.front().attribute;
  for (const auto& q : queries) {
    if (q.attribute.name != in.differentiating_attr.name || q.attribute.values != in.differentiating_attr.values) {
      throw ConfigError("all scenario queries must share one differentiating attribute");
    }
    in.query_ground_truth[q.query_id] = q.ground_truth;
  }
  in.protected_class = ProtectedClass{cfg.protected_attr.name, cfg.protected_attr.values[0]};
  if (config.user_metric.relevant_attrs.empty()) {
    for (const auto& a : cfg.other_attrs) {
      config.user_metric.relevant_attrs.push_back(a.name);
      if (a.numeric) config.user_metric.numeric_ranges[a.name] = a.max - a.min;
    }
  }
  in.config = std::move(config);
  for (const auto& u : in.profiles) {
    for (const auto& q : queries) {
      in.lists.emplace(ListKey{u.user_id, q.query_id}, serve(cfg, u, q.query_id));
    }
  }
  return in;
}

/// A battery of n queries over one binary attribute {a1, a2} with uniform
/// ground truth, plus three other attributes. Handy default for tests.
inline ScenarioConfig binary_scenario(std::size_t n_users, std::size_t n_queries, std::uint64_t seed) {
  ScenarioConfig cfg;
  cfg.n_users = n_users;
  cfg.seed = seed;
  cfg.other_attrs = {
      OtherAttributeSpec{"age", true, {}, 18.0, 80.0},
      OtherAttributeSpec{"region", false, {"north", "south", "east", "west"}},
      OtherAttributeSpec{"interest", false, {"sports", "politics", "science"}},
  };
  const AttributeSchema stance{"stance", {"a1", "a2"}, AttributeKind::differentiating_content};
  for (std::size_t i = 0; i < n_queries; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "q%03zu", i);
    cfg.queries.push_back(QuerySpec{buf, stance, GroundTruth{"stance", {{"a1", 0.5}, {"a2", 0.5}}}});
  }
  return cfg;
}

}  // namespace biasmeter
