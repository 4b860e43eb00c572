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

// Bias measures over an audit population.
//
//   individual_user_bias      similar users should receive similar lists
//   group_user_bias           distance between class representative lists
//   probabilistic_group_bias  total variation between the classes' list-variant laws
//   content_bias              attribute distribution vs. ground truth
//   combined_bias             attribute distribution of one subject vs. another
//   echo_chamber_test         opposite-direction deviations from ground truth
//   comparative_bias          two providers on a shared query battery
//
// Class-level measures are also exposed as statistics of a class assignment
// (detail::Assignment) so that stats.hpp can recompute them under relabeling
// and resampling without re-encoding the input.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "biasmeter/aggregation.hpp"
#include "biasmeter/distance.hpp"
#include "biasmeter/errors.hpp"
#include "biasmeter/parallel.hpp"
#include "biasmeter/types.hpp"

namespace biasmeter {

enum class QueryAggregation { mean, max };

inline constexpr double kDistributionEpsilon = 0.05;
inline constexpr double kListEpsilon = 0.1;
inline constexpr double kVariantRadius = 0.05;
inline constexpr std::size_t kTopViolations = 10;

struct MeasureConfig {
  /// Unset: 0.05 for distribution-based measures, 0.1 for list-space ones.
  std::optional<double> epsilon;
  std::size_t k = 10;
  DistanceKind dr_kind = DistanceKind::kendall;
  Weighting weighting = Weighting::uniform;
  Aggregator aggregator = Aggregator::borda;
  QueryAggregation query_aggregation = QueryAggregation::mean;
  double rbo_persistence = 0.9;
  /// Cap on representative depth; 0 keeps the maximum input depth.
  std::size_t representative_depth = 0;
  UserMetric user_metric;
  /// Individual bias only inspects pairs with D_u at most this.
  double max_pair_distance = 1.0;
  double variant_radius = kVariantRadius;
};

inline void validate(const MeasureConfig& c) {
  if (c.epsilon && !(*c.epsilon >= 0.0)) throw ParameterError("epsilon must be >= 0");
  if (c.k == 0) throw ParameterError("k must be >= 1");
  check_persistence(c.rbo_persistence);
  if (!(c.max_pair_distance >= 0.0)) throw ParameterError("max_pair_distance must be >= 0");
  if (!(c.variant_radius >= 0.0)) throw ParameterError("variant_radius must be >= 0");
}

inline double distribution_epsilon(const MeasureConfig& c) {
  return c.epsilon.value_or(kDistributionEpsilon);
}

inline double list_epsilon(const MeasureConfig& c) {
  return c.epsilon.value_or(c.dr_kind == DistanceKind::distribution ? kDistributionEpsilon
                                                                    : kListEpsilon);
}

/// Class P is every user whose protected attribute `attribute` equals `value`.
struct ProtectedClass {
  std::string attribute;
  std::string value;
};

using ListKey = std::pair<std::string, std::string>;  // (user_id, query_id)

struct AuditInput {
  std::vector<UserProfile> profiles;
  std::map<ListKey, RankedList> lists;
  ProtectedClass protected_class;
  AttributeSchema differentiating_attr;
  std::optional<GroundTruth> ground_truth;
  /// Per-query ground truth; takes precedence over ground_truth.
  std::map<std::string, GroundTruth> query_ground_truth;
  MeasureConfig config;

  bool has_ground_truth() const { return ground_truth.has_value() || !query_ground_truth.empty(); }
};

struct BiasVerdict {
  std::string measure_name;
  double magnitude = 0.0;
  double threshold = 0.0;
  bool biased = false;
  std::map<std::string, double> per_query;
  std::map<std::string, std::string> diagnostics;
};

inline BiasVerdict make_verdict(std::string name, double magnitude, double threshold,
                                std::map<std::string, double> per_query = {}) {
  BiasVerdict v;
  v.measure_name = std::move(name);
  v.magnitude = magnitude;
  v.threshold = threshold;
  v.biased = magnitude > threshold;
  v.per_query = std::move(per_query);
  return v;
}

/// Measures that are functions of the protected-class assignment.
enum class Measure {
  individual_user_bias,
  group_user_bias,
  probabilistic_group_bias,
  content_bias_protected,
  content_bias_unprotected,
  combined_bias_classes,
  echo_chamber,
};

inline std::string to_string(Measure m) {
  switch (m) {
    case Measure::individual_user_bias: return "individual_user_bias";
    case Measure::group_user_bias: return "group_user_bias";
    case Measure::probabilistic_group_bias: return "probabilistic_group_bias";
    case Measure::content_bias_protected: return "content_bias_protected";
    case Measure::content_bias_unprotected: return "content_bias_unprotected";
    case Measure::combined_bias_classes: return "combined_bias";
    case Measure::echo_chamber: return "echo_chamber_test";
  }
  return "unknown";
}

inline std::string format_number(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

namespace detail {

struct QueryIndex {
  std::string query_id;
  Interner interner;
  std::vector<int> lex;
  std::vector<EncodedList> lists;
  std::vector<int> slot_of_user;  // -1 when the user has no list for this query
  std::size_t max_depth = 0;
  std::optional<AttributeDistribution> truth;
};

struct PreparedAudit {
  const AuditInput* input = nullptr;
  std::vector<const UserProfile*> users;
  std::map<std::string, std::size_t, std::less<>> user_index;
  std::vector<char> in_protected;
  std::vector<QueryIndex> queries;
  std::size_t m = 0;

  const MeasureConfig& config() const { return input->config; }
};

inline PreparedAudit prepare(const AuditInput& in) {
  validate(in.config);
  check_differentiating(in.differentiating_attr);
  PreparedAudit prep;
  prep.input = &in;
  prep.m = in.differentiating_attr.size();
  for (const auto& u : in.profiles) {
    validate(u);
    if (!prep.user_index.emplace(u.user_id, prep.users.size()).second) {
      throw InputError("duplicate profile for user " + u.user_id);
    }
    const auto it = u.protected_attrs.find(in.protected_class.attribute);
    if (it == u.protected_attrs.end()) {
      throw ProfileError("user " + u.user_id + " lacks protected attribute " +
                         in.protected_class.attribute);
    }
    prep.users.push_back(&u);
    prep.in_protected.push_back(it->second == in.protected_class.value ? 1 : 0);
  }

  std::map<std::string, std::size_t> query_slot;
  for (const auto& [key, list] : in.lists) {
    const auto& [user, query] = key;
    const auto uit = prep.user_index.find(user);
    if (uit == prep.user_index.end()) throw InputError("list for unknown user " + user);
    auto [qit, inserted] = query_slot.emplace(query, prep.queries.size());
    if (inserted) {
      prep.queries.emplace_back();
      prep.queries.back().query_id = query;
      prep.queries.back().slot_of_user.assign(prep.users.size(), -1);
    }
    auto& q = prep.queries[qit->second];
    q.slot_of_user[uit->second] = static_cast<int>(q.lists.size());
    q.lists.push_back(encode(list, q.interner, &in.differentiating_attr));
    q.max_depth = std::max(q.max_depth, list.depth());
  }
  for (auto& q : prep.queries) {
    q.lex = lex_rank(q.interner);
    const auto gt = in.query_ground_truth.find(q.query_id);
    if (gt != in.query_ground_truth.end()) {
      q.truth = to_distribution(gt->second, in.differentiating_attr);
    } else if (in.ground_truth) {
      q.truth = to_distribution(*in.ground_truth, in.differentiating_attr);
    }
  }
  return prep;
}

/// Users of each class, possibly with repeats (bootstrap resamples).
struct Assignment {
  std::vector<std::size_t> protected_users;
  std::vector<std::size_t> unprotected_users;
};

inline Assignment assignment_from_labels(const std::vector<char>& in_protected) {
  Assignment a;
  for (std::size_t i = 0; i < in_protected.size(); ++i) {
    (in_protected[i] ? a.protected_users : a.unprotected_users).push_back(i);
  }
  return a;
}

inline void require_classes(const Assignment& a) {
  if (a.protected_users.empty()) throw InputError("protected class P is empty");
  if (a.unprotected_users.empty()) throw InputError("unprotected class P-bar is empty");
}

inline std::vector<const EncodedList*> class_lists(const QueryIndex& q,
                                                   const std::vector<std::size_t>& users) {
  std::vector<const EncodedList*> out;
  out.reserve(users.size());
  for (std::size_t u : users) {
    const int slot = q.slot_of_user[u];
    if (slot >= 0) out.push_back(&q.lists[static_cast<std::size_t>(slot)]);
  }
  return out;
}

inline std::size_t representative_depth(const MeasureConfig& c, const QueryIndex& q) {
  const std::size_t depth = std::max<std::size_t>(1, q.max_depth);
  return c.representative_depth > 0 ? std::min(depth, c.representative_depth) : depth;
}

inline EncodedList class_representative(const PreparedAudit& prep, const QueryIndex& q,
                                        const std::vector<std::size_t>& users,
                                        const char* label) {
  const auto lists = class_lists(q, users);
  if (lists.empty()) {
    throw InputError(std::string("class ") + label + " has no lists for query " + q.query_id);
  }
  return aggregate(prep.config().aggregator, ListRefs(lists), representative_depth(prep.config(), q),
                   q.lex);
}

struct Representatives {
  EncodedList protected_rep;
  EncodedList unprotected_rep;
};

inline Representatives class_representatives(const PreparedAudit& prep, const QueryIndex& q,
                                              const Assignment& a) {
  return Representatives{class_representative(prep, q, a.protected_users, "P"),
                         class_representative(prep, q, a.unprotected_users, "P-bar")};
}

inline AttributeDistribution distribution(const PreparedAudit& prep, const EncodedList& l) {
  return distribution_of(l, prep.m, prep.config().k, prep.config().weighting);
}

/// The configured list-space D_R on encoded lists.
inline double list_distance(const EncodedList& a, const EncodedList& b, const MeasureConfig& c,
                            std::size_t m) {
  switch (c.dr_kind) {
    case DistanceKind::kendall: return kendall(a, b);
    case DistanceKind::rbo: return rbo(a, b, c.rbo_persistence);
    case DistanceKind::topk: return topk_overlap(a, b, c.k);
    case DistanceKind::distribution:
      return distribution_distance(distribution_of(a, m, c.k, c.weighting),
                                   distribution_of(b, m, c.k, c.weighting));
  }
  throw ParameterError("unknown distance kind");
}

struct Aggregated {
  double value = 0.0;
  std::string worst_query;
};

inline Aggregated aggregate_queries(const std::map<std::string, double>& per_query,
                                    QueryAggregation how) {
  Aggregated out;
  if (per_query.empty()) return out;
  double total = 0.0;
  double worst = -1.0;
  for (const auto& [q, v] : per_query) {
    total += v;
    if (v > worst) {
      worst = v;
      out.worst_query = q;
    }
  }
  out.value = how == QueryAggregation::mean ? total / static_cast<double>(per_query.size()) : worst;
  return out;
}

inline void require_queries(const PreparedAudit& prep) {
  if (prep.queries.empty()) throw InputError("audit input has no result lists");
}

inline std::map<std::string, double> group_user_bias_per_query(const PreparedAudit& prep,
                                                               const Assignment& a) {
  require_classes(a);
  require_queries(prep);
  std::map<std::string, double> per_query;
  for (const auto& q : prep.queries) {
    const auto reps = class_representatives(prep, q, a);
    per_query[q.query_id] =
        std::abs(list_distance(reps.protected_rep, reps.unprotected_rep, prep.config(), prep.m));
  }
  return per_query;
}

inline std::map<std::string, double> combined_per_query(const PreparedAudit& prep,
                                                        const Assignment& a) {
  require_classes(a);
  require_queries(prep);
  std::map<std::string, double> per_query;
  for (const auto& q : prep.queries) {
    const auto reps = class_representatives(prep, q, a);
    per_query[q.query_id] =
        distribution_distance(distribution(prep, reps.protected_rep), distribution(prep, reps.unprotected_rep));
  }
  return per_query;
}

inline const AttributeDistribution& require_truth(const QueryIndex& q) {
  if (!q.truth) {
    throw ModeError("no ground truth for query " + q.query_id +
                    "; use comparative_bias for ground-truth-free audits");
  }
  return *q.truth;
}

inline std::map<std::string, double> content_per_query(const PreparedAudit& prep,
                                                       const Assignment& a, bool protected_side) {
  require_classes(a);
  require_queries(prep);
  std::map<std::string, double> per_query;
  for (const auto& q : prep.queries) {
    const auto& truth = require_truth(q);
    const auto rep = protected_side ? class_representative(prep, q, a.protected_users, "P")
                                    : class_representative(prep, q, a.unprotected_users, "P-bar");
    per_query[q.query_id] = distribution_distance(distribution(prep, rep), truth);
  }
  return per_query;
}

/// Signed deviation of the renormalized annotated distribution from truth.
inline std::vector<double> deviation(const AttributeDistribution& d, const AttributeDistribution& truth) {
  const double total = d.annotated_total();
  if (total <= kWeightTolerance) throw UndefinedMeasureError("distribution has no annotated mass");
  std::vector<double> dev(d.mass.size());
  const double truth_total = truth.annotated_total();
  for (std::size_t i = 0; i < d.mass.size(); ++i) dev[i] = d.mass[i] / total - truth.mass[i] / truth_total;
  return dev;
}

struct EchoQuery {
  double magnitude = 0.0;
  bool flagged = false;
  double content_p = 0.0;
  double content_pbar = 0.0;
  std::vector<double> dev_p;
  std::vector<double> dev_pbar;
};

inline EchoQuery echo_query(const PreparedAudit& prep, const QueryIndex& q, const Representatives& reps,
                            double epsilon) {
  const auto& truth = require_truth(q);
  EchoQuery e;
  e.dev_p = deviation(distribution(prep, reps.protected_rep), truth);
  e.dev_pbar = deviation(distribution(prep, reps.unprotected_rep), truth);
  for (std::size_t i = 0; i < e.dev_p.size(); ++i) {
    const double dp = e.dev_p[i], dq = e.dev_pbar[i];
    e.content_p = std::max(e.content_p, std::abs(dp));
    e.content_pbar = std::max(e.content_pbar, std::abs(dq));
    e.magnitude = std::max(e.magnitude, std::abs(dp - dq) / 2.0);
    if ((dp > epsilon && dq < -epsilon) || (dp < -epsilon && dq > epsilon)) e.flagged = true;
  }
  return e;
}

inline EchoQuery echo_query(const PreparedAudit& prep, const QueryIndex& q, const Assignment& a,
                            double epsilon) {
  require_truth(q);
  return echo_query(prep, q, class_representatives(prep, q, a), epsilon);
}

inline std::map<std::string, double> echo_per_query(const PreparedAudit& prep, const Assignment& a) {
  require_classes(a);
  require_queries(prep);
  std::map<std::string, double> per_query;
  const double eps = distribution_epsilon(prep.config());
  for (const auto& q : prep.queries) per_query[q.query_id] = echo_query(prep, q, a, eps).magnitude;
  return per_query;
}

/// List variants per query: exact duplicates merged, then leader clustering
/// with radius variant_radius under the configured D_R, scanning users in
/// input order. Independent of the class labels.
struct VariantIndex {
  std::vector<std::vector<int>> variant_of_slot;  // per query, per list slot
  std::vector<std::size_t> n_variants;
};

inline std::uint64_t popcount_and(const std::vector<std::uint64_t>& x,
                                  const std::vector<std::uint64_t>& y) {
  std::uint64_t c = 0;
  for (std::size_t i = 0; i < x.size(); ++i) c += static_cast<std::uint64_t>(std::popcount(x[i] & y[i]));
  return c;
}

/// Lower bound on the normalized Kendall distance from sizes and overlap only:
/// pairs split across the lists and pairs inside one list's exclusive part
/// cost the same whatever the order.
inline double kendall_lower_bound(std::size_t na, std::size_t nb, std::size_t common) {
  const double sa = static_cast<double>(na - common), sb = static_cast<double>(nb - common);
  const double n = static_cast<double>(na + nb - common);
  if (n < 2) return 0.0;
  const double forced = sa * sb + kKendallNeutralPenalty * (sa * (sa - 1) / 2 + sb * (sb - 1) / 2);
  return forced / (n * (n - 1) / 2);
}

inline VariantIndex build_variants(const PreparedAudit& prep) {
  VariantIndex vi;
  const auto& cfg = prep.config();
  for (const auto& q : prep.queries) {
    const std::size_t n_slots = q.lists.size();
    // Slots in user order.
    std::vector<std::size_t> slots;
    for (std::size_t u = 0; u < prep.users.size(); ++u) {
      if (q.slot_of_user[u] >= 0) slots.push_back(static_cast<std::size_t>(q.slot_of_user[u]));
    }
    std::vector<int> variant(n_slots, -1);
    std::map<std::vector<int>, int> exact;
    std::vector<std::size_t> unique_slots;
    std::vector<int> unique_of_slot(n_slots, -1);
    for (std::size_t s : slots) {
      auto [it, inserted] = exact.emplace(q.lists[s].items, static_cast<int>(unique_slots.size()));
      if (inserted) unique_slots.push_back(s);
      unique_of_slot[s] = it->second;
    }
    const std::size_t words = (q.interner.size() + 63) / 64;
    const auto bits_of = [&](const EncodedList& l) {
      std::vector<std::uint64_t> b(words, 0);
      for (int id : l.items) b[static_cast<std::size_t>(id) / 64] |= std::uint64_t{1} << (id % 64);
      return b;
    };
    std::vector<std::size_t> leaders;  // unique indices
    std::vector<std::vector<std::uint64_t>> leader_bits;
    std::vector<int> cluster_of_unique(unique_slots.size(), -1);
    for (std::size_t u = 0; u < unique_slots.size(); ++u) {
      const auto& l = q.lists[unique_slots[u]];
      const auto bits = bits_of(l);
      int found = -1;
      for (std::size_t c = 0; c < leaders.size() && found < 0; ++c) {
        const auto& leader = q.lists[unique_slots[leaders[c]]];
        if (cfg.dr_kind == DistanceKind::kendall &&
            kendall_lower_bound(l.size(), leader.size(), popcount_and(bits, leader_bits[c])) >
                cfg.variant_radius) {
          continue;
        }
        if (list_distance(l, leader, cfg, prep.m) <= cfg.variant_radius) found = static_cast<int>(c);
      }
      if (found < 0) {
        found = static_cast<int>(leaders.size());
        leaders.push_back(u);
        leader_bits.push_back(bits);
      }
      cluster_of_unique[u] = found;
    }
    for (std::size_t s : slots) variant[s] = cluster_of_unique[static_cast<std::size_t>(unique_of_slot[s])];
    vi.variant_of_slot.push_back(std::move(variant));
    vi.n_variants.push_back(leaders.size());
  }
  return vi;
}

/// Total-variation distance between the classes' empirical variant laws.
inline std::map<std::string, double> probabilistic_per_query(const PreparedAudit& prep,
                                                             const VariantIndex& vi,
                                                             const Assignment& a) {
  require_classes(a);
  require_queries(prep);
  std::map<std::string, double> per_query;
  for (std::size_t qi = 0; qi < prep.queries.size(); ++qi) {
    const auto& q = prep.queries[qi];
    if (vi.n_variants[qi] < 2) {
      per_query[q.query_id] = 0.0;
      continue;
    }
    std::vector<double> cp(vi.n_variants[qi], 0.0), cq(vi.n_variants[qi], 0.0);
    double np = 0.0, nq = 0.0;
    for (std::size_t u : a.protected_users) {
      const int s = q.slot_of_user[u];
      if (s < 0) continue;
      cp[static_cast<std::size_t>(vi.variant_of_slot[qi][static_cast<std::size_t>(s)])] += 1.0;
      np += 1.0;
    }
    for (std::size_t u : a.unprotected_users) {
      const int s = q.slot_of_user[u];
      if (s < 0) continue;
      cq[static_cast<std::size_t>(vi.variant_of_slot[qi][static_cast<std::size_t>(s)])] += 1.0;
      nq += 1.0;
    }
    if (np == 0.0 || nq == 0.0) throw InputError("a class has no lists for query " + q.query_id);
    double tv = 0.0;
    for (std::size_t v = 0; v < cp.size(); ++v) tv += std::abs(cp[v] / np - cq[v] / nq);
    per_query[q.query_id] = std::min(1.0, tv / 2.0);
  }
  return per_query;
}

/// Query-aggregated magnitudes of class-level measures under one assignment.
/// Class representatives are built once per query and shared by the measures;
/// `variants` is needed only for probabilistic_group_bias.
inline std::vector<double> class_statistics(const PreparedAudit& prep, std::span<const Measure> measures,
                                            const Assignment& a, const VariantIndex* variants) {
  require_classes(a);
  require_queries(prep);
  const auto& cfg = prep.config();
  bool need_reps = false;
  for (Measure m : measures) {
    if (m == Measure::individual_user_bias) throw ParameterError(to_string(m) + " is not a class-level measure");
    need_reps = need_reps || m != Measure::probabilistic_group_bias;
  }
  std::vector<std::map<std::string, double>> per_query(measures.size());
  if (need_reps) {
    const double eps = distribution_epsilon(cfg);
    for (const auto& q : prep.queries) {
      const auto reps = class_representatives(prep, q, a);
      for (std::size_t i = 0; i < measures.size(); ++i) {
        double value = 0.0;
        switch (measures[i]) {
          case Measure::group_user_bias:
            value = std::abs(list_distance(reps.protected_rep, reps.unprotected_rep, cfg, prep.m));
            break;
          case Measure::combined_bias_classes:
            value = distribution_distance(distribution(prep, reps.protected_rep),
                                          distribution(prep, reps.unprotected_rep));
            break;
          case Measure::content_bias_protected:
            value = distribution_distance(distribution(prep, reps.protected_rep), require_truth(q));
            break;
          case Measure::content_bias_unprotected:
            value = distribution_distance(distribution(prep, reps.unprotected_rep), require_truth(q));
            break;
          case Measure::echo_chamber: value = echo_query(prep, q, reps, eps).magnitude; break;
          default: continue;
        }
        per_query[i][q.query_id] = value;
      }
    }
  }
  std::vector<double> out(measures.size());
  for (std::size_t i = 0; i < measures.size(); ++i) {
    if (measures[i] == Measure::probabilistic_group_bias) per_query[i] = probabilistic_per_query(prep, *variants, a);
    out[i] = aggregate_queries(per_query[i], cfg.query_aggregation).value;
  }
  return out;
}

inline double class_statistic(const PreparedAudit& prep, Measure m, const Assignment& a,
                              const VariantIndex* variants) {
  return class_statistics(prep, std::span<const Measure>(&m, 1), a, variants).front();
}

inline void finish(BiasVerdict& v, QueryAggregation how) {
  const auto agg = aggregate_queries(v.per_query, how);
  v.magnitude = agg.value;
  v.biased = v.magnitude > v.threshold;
  v.diagnostics["query_aggregation"] = how == QueryAggregation::mean ? "mean" : "max";
  if (!agg.worst_query.empty()) v.diagnostics["worst_query"] = agg.worst_query;
}

/// Per-user encoding of the relevant non-protected attributes for fast D_u.
struct UserFeatures {
  std::vector<char> numeric;            // per relevant attr
  std::vector<double> ranges;           // per relevant attr (numeric only)
  std::vector<std::vector<double>> values;  // per user, per attr (categorical: code)
};

inline UserFeatures user_features(const PreparedAudit& prep) {
  const auto& metric = prep.config().user_metric;
  if (metric.relevant_attrs.empty()) {
    throw ParameterError("individual bias needs relevant attributes for the user distance");
  }
  UserFeatures f;
  const std::size_t n_attr = metric.relevant_attrs.size();
  f.numeric.assign(n_attr, 0);
  f.ranges.assign(n_attr, 0.0);
  std::vector<std::map<std::string, double>> codes(n_attr);
  f.values.assign(prep.users.size(), std::vector<double>(n_attr, 0.0));
  for (std::size_t a = 0; a < n_attr; ++a) {
    const auto& name = metric.relevant_attrs[a];
    for (std::size_t u = 0; u < prep.users.size(); ++u) {
      const auto it = prep.users[u]->other.find(name);
      if (it == prep.users[u]->other.end()) {
        throw ProfileError("user " + prep.users[u]->user_id + " lacks attribute " + name);
      }
      const bool is_num = std::holds_alternative<double>(it->second);
      if (u == 0) {
        f.numeric[a] = is_num;
      } else if (static_cast<bool>(f.numeric[a]) != is_num) {
        throw ProfileError("attribute " + name + " mixes numeric and categorical values");
      }
      if (is_num) {
        f.values[u][a] = std::get<double>(it->second);
      } else {
        const auto& s = std::get<std::string>(it->second);
        auto [cit, _] = codes[a].emplace(s, static_cast<double>(codes[a].size()));
        f.values[u][a] = cit->second;
      }
    }
    if (f.numeric[a]) {
      const auto r = metric.numeric_ranges.find(name);
      if (r == metric.numeric_ranges.end() || !(r->second > 0.0)) {
        throw ParameterError("numeric attribute " + name + " has no positive declared range");
      }
      f.ranges[a] = r->second;
    }
  }
  return f;
}

inline double feature_distance(const UserFeatures& f, std::size_t u, std::size_t v) {
  double total = 0.0;
  const auto& x = f.values[u];
  const auto& y = f.values[v];
  for (std::size_t a = 0; a < x.size(); ++a) {
    total += f.numeric[a] ? std::min(1.0, std::abs(x[a] - y[a]) / f.ranges[a]) : (x[a] == y[a] ? 0.0 : 1.0);
  }
  return total / static_cast<double>(x.size());
}

}  // namespace detail

/// Individual bias: for every user pair and query, violation
/// max(0, D_R(R_u1, R_u2) - D_u(u1, u2)). Per query the worst violation is
/// kept; queries are then aggregated. Threshold is 0.
inline BiasVerdict individual_user_bias(const AuditInput& in) {
  const auto prep = detail::prepare(in);
  const auto& cfg = in.config;
  const std::size_t n = prep.users.size();
  if (n < 2) throw UndefinedMeasureError("individual user bias needs at least two users");
  detail::require_queries(prep);
  for (const auto& q : prep.queries) {
    for (std::size_t u = 0; u < n; ++u) {
      if (q.slot_of_user[u] < 0) {
        throw InputError("user " + prep.users[u]->user_id + " has no list for query " + q.query_id);
      }
    }
  }
  const auto features = detail::user_features(prep);
  const std::size_t n_queries = prep.queries.size();

  // Kendall on small item universes runs on prefix bitsets.
  std::vector<std::vector<detail::PrefixBits>> bits(n_queries);
  std::vector<std::size_t> words(n_queries, 0);
  if (cfg.dr_kind == DistanceKind::kendall) {
    for (std::size_t qi = 0; qi < n_queries; ++qi) {
      const auto& q = prep.queries[qi];
      if (q.interner.size() > detail::kPrefixBitsMaxUniverse) continue;
      words[qi] = detail::bit_words(q.interner.size());
      for (const auto& l : q.lists) bits[qi].push_back(detail::prefix_bits(l, q.interner.size()));
    }
  }
  const auto pair_distance = [&](std::size_t qi, std::size_t su, std::size_t sv) {
    const auto& q = prep.queries[qi];
    if (words[qi] > 0) {
      return detail::normalized_kendall(
          detail::kendall_count(q.lists[su], bits[qi][su], q.lists[sv], bits[qi][sv], words[qi]));
    }
    return detail::list_distance(q.lists[su], q.lists[sv], cfg, prep.m);
  };

  struct Violation {
    double amount;
    std::size_t query, u, v;
  };
  const auto worse = [](const Violation& x, const Violation& y) {
    if (x.amount != y.amount) return x.amount > y.amount;
    return std::tie(x.query, x.u, x.v) < std::tie(y.query, y.u, y.v);
  };
  struct RowResult {
    std::vector<double> worst;  // per query
    std::vector<Violation> top;
    std::uint64_t checked = 0;
    std::uint64_t violating = 0;
  };
  std::vector<RowResult> rows(n);
  detail::parallel_for(n, [&](std::size_t u) {
    RowResult& r = rows[u];
    r.worst.assign(n_queries, 0.0);
    std::vector<std::pair<std::size_t, double>> partners;  // (v, D_u) within reach
    for (std::size_t v = u + 1; v < n; ++v) {
      const double du = detail::feature_distance(features, u, v);
      if (du <= cfg.max_pair_distance) partners.emplace_back(v, du);
    }
    // Query-major so one query's lists stay in cache.
    for (std::size_t qi = 0; qi < n_queries; ++qi) {
      const auto& q = prep.queries[qi];
      const auto su = static_cast<std::size_t>(q.slot_of_user[u]);
      for (const auto& [v, du] : partners) {
        const double dr = pair_distance(qi, su, static_cast<std::size_t>(q.slot_of_user[v]));
        ++r.checked;
        const double violation = dr - du;
        if (violation <= 0.0) continue;
        ++r.violating;
        r.worst[qi] = std::max(r.worst[qi], violation);
        const Violation viol{violation, qi, u, v};
        if (r.top.size() < kTopViolations || worse(viol, r.top.back())) {
          r.top.push_back(viol);
          std::sort(r.top.begin(), r.top.end(), worse);
          if (r.top.size() > kTopViolations) r.top.pop_back();
        }
      }
    }
  });

  std::vector<double> worst(n_queries, 0.0);
  std::vector<Violation> top;
  std::uint64_t checked = 0, violating = 0;
  for (const auto& r : rows) {
    for (std::size_t qi = 0; qi < n_queries; ++qi) worst[qi] = std::max(worst[qi], r.worst[qi]);
    top.insert(top.end(), r.top.begin(), r.top.end());
    checked += r.checked;
    violating += r.violating;
  }
  std::sort(top.begin(), top.end(), worse);
  if (top.size() > kTopViolations) top.resize(kTopViolations);

  BiasVerdict verdict = make_verdict("individual_user_bias", 0.0, 0.0);
  for (std::size_t qi = 0; qi < n_queries; ++qi) verdict.per_query[prep.queries[qi].query_id] = worst[qi];
  detail::finish(verdict, cfg.query_aggregation);
  verdict.diagnostics["pair_checks"] = std::to_string(checked);
  verdict.diagnostics["violations"] = std::to_string(violating);
  std::string listing;
  for (const auto& t : top) {
    if (!listing.empty()) listing += "; ";
    listing += prep.users[t.u]->user_id + "|" + prep.users[t.v]->user_id + "|" +
               prep.queries[t.query].query_id + "|" + format_number(t.amount);
  }
  verdict.diagnostics["top_violations"] = listing;
  return verdict;
}

/// Group bias: |D_R(R_P, R_P-bar)| between class representatives.
inline BiasVerdict group_user_bias(const AuditInput& in) {
  const auto prep = detail::prepare(in);
  const auto a = detail::assignment_from_labels(prep.in_protected);
  BiasVerdict v = make_verdict("group_user_bias", 0.0, list_epsilon(in.config),
                               detail::group_user_bias_per_query(prep, a));
  detail::finish(v, in.config.query_aggregation);
  return v;
}

/// Total variation between Pr(list variant | P) and Pr(list variant | P-bar).
inline BiasVerdict probabilistic_group_bias(const AuditInput& in) {
  const auto prep = detail::prepare(in);
  const auto a = detail::assignment_from_labels(prep.in_protected);
  const auto vi = detail::build_variants(prep);
  BiasVerdict v = make_verdict("probabilistic_group_bias", 0.0, list_epsilon(in.config),
                               detail::probabilistic_per_query(prep, vi, a));
  detail::finish(v, in.config.query_aggregation);
  std::size_t degenerate = 0, total_variants = 0;
  for (std::size_t n : vi.n_variants) {
    degenerate += n < 2;
    total_variants += n;
  }
  v.diagnostics["variants"] = std::to_string(total_variants);
  v.diagnostics["degenerate_queries"] = std::to_string(degenerate);
  v.diagnostics["degenerate"] = degenerate == vi.n_variants.size() ? "true" : "false";
  return v;
}

/// Content bias of one list: max-norm distance to the ground truth.
inline BiasVerdict content_bias(const AuditInput& in, const RankedList& subject) {
  validate(in.config);
  check_differentiating(in.differentiating_attr);
  std::optional<GroundTruth> gt;
  if (const auto it = in.query_ground_truth.find(subject.query_id()); it != in.query_ground_truth.end()) {
    gt = it->second;
  } else {
    gt = in.ground_truth;
  }
  if (!gt) throw ModeError("content bias needs ground truth; use comparative_bias instead");
  const double d = distribution_distance(
      attribute_distribution(subject, in.differentiating_attr, in.config.k, in.config.weighting),
      to_distribution(*gt, in.differentiating_attr));
  BiasVerdict v = make_verdict("content_bias", d, distribution_epsilon(in.config),
                               {{subject.query_id(), d}});
  v.diagnostics["subject"] = subject.user_id();
  return v;
}

enum class UserClass { protected_class, unprotected_class };

/// Content bias of a class representative, per query then aggregated.
inline BiasVerdict content_bias(const AuditInput& in, UserClass cls) {
  if (!in.has_ground_truth()) {
    throw ModeError("content bias needs ground truth; use comparative_bias instead");
  }
  const auto prep = detail::prepare(in);
  const auto a = detail::assignment_from_labels(prep.in_protected);
  const bool p = cls == UserClass::protected_class;
  BiasVerdict v = make_verdict(p ? "content_bias_protected" : "content_bias_unprotected", 0.0,
                               distribution_epsilon(in.config), detail::content_per_query(prep, a, p));
  detail::finish(v, in.config.query_aggregation);
  v.diagnostics["subject"] = p ? "P" : "P-bar";
  return v;
}

/// One side of a combined-bias comparison: a user or a class representative.
struct Subject {
  enum class Kind { user, protected_class, unprotected_class };
  Kind kind = Kind::protected_class;
  std::string user_id;

  static Subject user(std::string id) { return Subject{Kind::user, std::move(id)}; }
  static Subject protected_class() { return Subject{Kind::protected_class, {}}; }
  static Subject unprotected_class() { return Subject{Kind::unprotected_class, {}}; }

  std::string label() const {
    switch (kind) {
      case Kind::user: return user_id;
      case Kind::protected_class: return "P";
      case Kind::unprotected_class: return "P-bar";
    }
    return {};
  }
};

/// Relative content bias: max_i |Pr(s1, a_i) - Pr(s2, a_i)|.
/// Zero whenever both subjects carry the same attribute distribution, however
/// far that distribution is from any ground truth.
inline BiasVerdict combined_bias(const AuditInput& in, const Subject& s1, const Subject& s2) {
  const auto prep = detail::prepare(in);
  detail::require_queries(prep);
  const auto a = detail::assignment_from_labels(prep.in_protected);
  const bool needs_classes = s1.kind != Subject::Kind::user || s2.kind != Subject::Kind::user;
  if (needs_classes) detail::require_classes(a);
  const auto resolve = [&](const detail::QueryIndex& q, const Subject& s) -> detail::EncodedList {
    switch (s.kind) {
      case Subject::Kind::user: {
        const auto uit = prep.user_index.find(s.user_id);
        if (uit == prep.user_index.end()) throw InputError("unknown user " + s.user_id);
        const int slot = q.slot_of_user[uit->second];
        if (slot < 0) throw InputError("user " + s.user_id + " has no list for query " + q.query_id);
        return q.lists[static_cast<std::size_t>(slot)];
      }
      case Subject::Kind::protected_class: return detail::class_representative(prep, q, a.protected_users, "P");
      case Subject::Kind::unprotected_class:
        return detail::class_representative(prep, q, a.unprotected_users, "P-bar");
    }
    throw InputError("bad subject");
  };
  std::map<std::string, double> per_query;
  for (const auto& q : prep.queries) {
    per_query[q.query_id] = distribution_distance(detail::distribution(prep, resolve(q, s1)),
                                                  detail::distribution(prep, resolve(q, s2)));
  }
  BiasVerdict v = make_verdict("combined_bias", 0.0, distribution_epsilon(in.config), std::move(per_query));
  detail::finish(v, in.config.query_aggregation);
  v.diagnostics["subjects"] = s1.label() + " vs " + s2.label();
  return v;
}

/// Looks for the same value over-represented for one class and
/// under-represented for the other, relative to ground truth. The verdict's
/// magnitude is max_i |dev_P(a_i) - dev_P-bar(a_i)| / 2; the echo-chamber
/// pattern itself is reported in diagnostics["echo_chamber"].
inline BiasVerdict echo_chamber_test(const AuditInput& in) {
  if (!in.has_ground_truth()) throw ModeError("echo chamber test needs ground truth");
  const auto prep = detail::prepare(in);
  detail::require_queries(prep);
  const auto a = detail::assignment_from_labels(prep.in_protected);
  detail::require_classes(a);
  const double eps = distribution_epsilon(in.config);
  BiasVerdict v = make_verdict("echo_chamber_test", 0.0, eps);
  bool flagged = false;
  std::vector<std::string> flagged_queries;
  double content_p = 0.0, content_pbar = 0.0;
  const auto& values = in.differentiating_attr.values;
  for (const auto& q : prep.queries) {
    const auto e = detail::echo_query(prep, q, a, eps);
    v.per_query[q.query_id] = e.magnitude;
    if (e.flagged) {
      flagged = true;
      flagged_queries.push_back(q.query_id);
    }
    content_p = std::max(content_p, e.content_p);
    content_pbar = std::max(content_pbar, e.content_pbar);
    if (prep.queries.size() == 1) {
      for (std::size_t i = 0; i < values.size(); ++i) {
        v.diagnostics["deviation_P[" + values[i] + "]"] = format_number(e.dev_p[i]);
        v.diagnostics["deviation_P-bar[" + values[i] + "]"] = format_number(e.dev_pbar[i]);
      }
    }
  }
  detail::finish(v, in.config.query_aggregation);
  v.diagnostics["echo_chamber"] = flagged ? "true" : "false";
  std::string fq;
  for (const auto& q : flagged_queries) fq += (fq.empty() ? "" : ",") + q;
  v.diagnostics["flagged_queries"] = fq;
  v.diagnostics["max_content_bias_P"] = format_number(content_p);
  v.diagnostics["max_content_bias_P-bar"] = format_number(content_pbar);
  return v;
}

inline bool echo_chamber_flagged(const BiasVerdict& v) {
  const auto it = v.diagnostics.find("echo_chamber");
  return it != v.diagnostics.end() && it->second == "true";
}

struct ComparativeResult {
  BiasVerdict distribution;  // attribute-distribution channel
  BiasVerdict list_space;    // configured D_R channel
};

/// Compares two providers query by query. The distribution channel uses the
/// max-norm distribution distance; the list channel uses the configured D_R
/// (Kendall when the configured D_R is itself distribution-based).
inline ComparativeResult comparative_bias(const std::map<std::string, RankedList>& lists_a,
                                          const std::map<std::string, RankedList>& lists_b,
                                          const AttributeSchema& attr, const MeasureConfig& config) {
  validate(config);
  check_differentiating(attr);
  MeasureConfig list_cfg = config;
  if (list_cfg.dr_kind == DistanceKind::distribution) list_cfg.dr_kind = DistanceKind::kendall;
  ComparativeResult out{make_verdict("comparative_bias.distribution", 0.0, distribution_epsilon(config)),
                        make_verdict("comparative_bias.list", 0.0, list_epsilon(list_cfg))};
  for (const auto& [query, a] : lists_a) {
    const auto bit = lists_b.find(query);
    if (bit == lists_b.end()) continue;
    detail::Interner interner;
    const auto ea = detail::encode(a, interner, &attr);
    const auto eb = detail::encode(bit->second, interner, &attr);
    out.distribution.per_query[query] =
        distribution_distance(detail::distribution_of(ea, attr.size(), config.k, config.weighting),
                              detail::distribution_of(eb, attr.size(), config.k, config.weighting));
    out.list_space.per_query[query] = detail::list_distance(ea, eb, list_cfg, attr.size());
  }
  if (out.distribution.per_query.empty()) throw InputError("the two providers share no queries");
  detail::finish(out.distribution, config.query_aggregation);
  detail::finish(out.list_space, config.query_aggregation);
  const auto kind_name = [](DistanceKind k) {
    switch (k) {
      case DistanceKind::kendall: return "kendall";
      case DistanceKind::rbo: return "rbo";
      case DistanceKind::topk: return "topk";
      case DistanceKind::distribution: return "distribution";
    }
    return "";
  };
  out.list_space.diagnostics["distance"] = kind_name(list_cfg.dr_kind);
  out.distribution.diagnostics["shared_queries"] = std::to_string(out.distribution.per_query.size());
  return out;
}

/// Class representatives per query, materialized as string-level lists.
inline std::map<std::string, RankedList> class_representative_lists(const AuditInput& in,
                                                                    UserClass cls) {
  std::map<std::string, std::vector<RankedList>> by_query;
  std::map<std::string, bool> member;
  for (const auto& u : in.profiles) {
    const auto it = u.protected_attrs.find(in.protected_class.attribute);
    if (it == u.protected_attrs.end()) {
      throw ProfileError("user " + u.user_id + " lacks protected attribute " + in.protected_class.attribute);
    }
    member[u.user_id] = (it->second == in.protected_class.value) == (cls == UserClass::protected_class);
  }
  std::map<std::string, std::size_t> depth;
  for (const auto& [key, list] : in.lists) {
    depth[key.second] = std::max(depth[key.second], list.depth());
    const auto m = member.find(key.first);
    if (m == member.end()) throw InputError("list for unknown user " + key.first);
    if (m->second) by_query[key.second].push_back(list);
  }
  std::map<std::string, RankedList> out;
  for (auto& [query, lists] : by_query) {
    std::size_t k = std::max<std::size_t>(1, depth[query]);
    if (in.config.representative_depth > 0) k = std::min(k, in.config.representative_depth);
    out.emplace(query, aggregate(ListCollection{std::move(lists), cls == UserClass::protected_class ? "P" : "P-bar"},
                                 in.config.aggregator, k));
  }
  return out;
}

/// Balance of non-protected attributes across the two classes: for numeric
/// attributes the difference of class means, for categorical ones the largest
/// difference of value frequencies. A diagnostic, not a causal claim.
inline std::map<std::string, double> attribute_balance(const AuditInput& in) {
  std::map<std::string, std::vector<const UserProfile*>> cls;
  for (const auto& u : in.profiles) {
    const auto it = u.protected_attrs.find(in.protected_class.attribute);
    const bool p = it != u.protected_attrs.end() && it->second == in.protected_class.value;
    cls[p ? "P" : "Q"].push_back(&u);
  }
  std::set<std::string> names;
  for (const auto& u : in.profiles) {
    for (const auto& [name, _] : u.other) names.insert(name);
  }
  std::map<std::string, double> out;
  if (cls["P"].empty() || cls["Q"].empty()) return out;
  for (const auto& name : names) {
    double mean[2] = {0, 0};
    std::map<std::string, double> freq[2];
    bool numeric = false;
    int side = 0;
    for (const char* c : {"P", "Q"}) {
      double count = 0;
      for (const auto* u : cls[c]) {
        const auto it = u->other.find(name);
        if (it == u->other.end()) continue;
        count += 1;
        if (const auto* x = std::get_if<double>(&it->second)) {
          numeric = true;
          mean[side] += *x;
        } else {
          freq[side][std::get<std::string>(it->second)] += 1;
        }
      }
      if (count > 0) {
        mean[side] /= count;
        for (auto& [_, f] : freq[side]) f /= count;
      }
      ++side;
    }
    if (numeric) {
      out[name] = mean[0] - mean[1];
    } else {
      double worst = 0.0;
      std::set<std::string> keys;
      for (const auto& f : freq) {
        for (const auto& [k, _] : f) keys.insert(k);
      }
      for (const auto& k : keys) {
        const double x = freq[0].count(k) ? freq[0].at(k) : 0.0;
        const double y = freq[1].count(k) ? freq[1].at(k) : 0.0;
        worst = std::max(worst, std::abs(x - y));
      }
      out[name] = worst;
    }
  }
  return out;
}

}  // namespace biasmeter
