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

// Pairwise distances between ranked lists and between users.
//
// All distances are normalized to [0, 1]. The string-level entry points
// (kendall_distance, rbo_distance, ...) intern item ids and forward to the
// integer-encoded kernels in detail::, which the audit measures call directly
// on pre-encoded lists.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "biasmeter/errors.hpp"
#include "biasmeter/types.hpp"

namespace biasmeter {

enum class Weighting { uniform, rank_discounted };

/// Which list-space D_R an audit uses.
enum class DistanceKind { kendall, rbo, topk, distribution };

/// Penalty for a pair of items that only one list ranks.
inline constexpr double kKendallNeutralPenalty = 0.5;

struct DistanceDiagnostics {
  /// Fewer than two distinct items overall: no pair to compare.
  bool degenerate = false;
};

/// Mass over the schema's values plus an explicit unannotated bucket.
struct AttributeDistribution {
  std::vector<double> mass;
  double unannotated = 0.0;

  double annotated_total() const {
    double t = 0.0;
    for (double v : mass) t += v;
    return t;
  }
};

inline AttributeDistribution to_distribution(const GroundTruth& gt, const AttributeSchema& attr) {
  return AttributeDistribution{ground_truth_vector(gt, attr), 0.0};
}

namespace detail {

class Interner {
 public:
  int id(const std::string& name) {
    auto [it, inserted] = ids_.try_emplace(name, static_cast<int>(names_.size()));
    if (inserted) names_.push_back(name);
    return it->second;
  }
  const std::string& name(int id) const { return names_[static_cast<std::size_t>(id)]; }
  std::size_t size() const noexcept { return names_.size(); }

 private:
  std::unordered_map<std::string, int> ids_;
  std::vector<std::string> names_;
};

/// A ranked list with interned item ids and, optionally, annotation rows for
/// one attribute (width = m + 1, last column is the unannotated mass).
struct EncodedList {
  std::vector<int> items;
  std::vector<std::pair<int, int>> by_id;  // (item, position), sorted by item
  std::vector<double> annot;
  std::size_t width = 0;

  std::size_t size() const noexcept { return items.size(); }
  std::span<const double> row(std::size_t pos) const {
    return std::span<const double>(annot).subspan(pos * width, width);
  }
  void index() {
    by_id.clear();
    by_id.reserve(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) by_id.emplace_back(items[i], static_cast<int>(i));
    std::sort(by_id.begin(), by_id.end());
  }
};

/// Annotation row of an item for attr. Missing annotation means fully unannotated.
inline void annotation_row(const ResultItem& item, const AttributeSchema& attr,
                           std::span<double> row) {
  std::fill(row.begin(), row.end(), 0.0);
  const auto it = item.annotations.find(attr.name);
  if (it == item.annotations.end()) {
    row[attr.size()] = 1.0;
    return;
  }
  for (const auto& [value, w] : it->second) {
    if (value == kUnannotated) {
      row[attr.size()] += w;
      continue;
    }
    const auto idx = attr.index_of(value);
    if (!idx) {
      throw SchemaError("item " + item.item_id + " annotated with '" + value +
                        "', not a value of attribute " + attr.name);
    }
    row[*idx] += w;
  }
}

inline EncodedList encode(const RankedList& list, Interner& interner,
                          const AttributeSchema* attr = nullptr) {
  EncodedList out;
  out.items.reserve(list.depth());
  for (const auto& item : list.items()) out.items.push_back(interner.id(item.item_id));
  if (attr != nullptr) {
    out.width = attr->size() + 1;
    out.annot.assign(list.depth() * out.width, 0.0);
    for (std::size_t i = 0; i < list.depth(); ++i) {
      annotation_row(list.items()[i], *attr,
                     std::span<double>(out.annot).subspan(i * out.width, out.width));
    }
  }
  out.index();
  return out;
}

struct PairScratch {
  std::vector<int> a_pos_in_b;  // -1 when absent
  std::vector<char> b_common;
  std::vector<int> seq;
  std::vector<int> tmp;
};

inline PairScratch& pair_scratch() {
  thread_local PairScratch scratch;
  return scratch;
}

/// Marks common items of a and b. Returns the number of common items.
inline std::size_t match(const EncodedList& a, const EncodedList& b, PairScratch& s) {
  s.a_pos_in_b.assign(a.size(), -1);
  s.b_common.assign(b.size(), 0);
  std::size_t i = 0, j = 0, common = 0;
  while (i < a.by_id.size() && j < b.by_id.size()) {
    if (a.by_id[i].first < b.by_id[j].first) {
      ++i;
    } else if (b.by_id[j].first < a.by_id[i].first) {
      ++j;
    } else {
      s.a_pos_in_b[static_cast<std::size_t>(a.by_id[i].second)] = b.by_id[j].second;
      s.b_common[static_cast<std::size_t>(b.by_id[j].second)] = 1;
      ++common;
      ++i;
      ++j;
    }
  }
  return common;
}

/// Inversions in seq; seq is reordered.
inline std::uint64_t count_inversions(std::vector<int>& seq, std::vector<int>& tmp) {
  const std::size_t n = seq.size();
  if (n < 2) return 0;
  tmp.resize(n);
  std::uint64_t inv = 0;
  for (std::size_t width = 1; width < n; width *= 2) {
    for (std::size_t lo = 0; lo < n; lo += 2 * width) {
      const std::size_t mid = std::min(lo + width, n);
      const std::size_t hi = std::min(lo + 2 * width, n);
      std::size_t i = lo, j = mid, k = lo;
      while (i < mid && j < hi) {
        if (seq[j] < seq[i]) {
          inv += mid - i;
          tmp[k++] = seq[j++];
        } else {
          tmp[k++] = seq[i++];
        }
      }
      while (i < mid) tmp[k++] = seq[i++];
      while (j < hi) tmp[k++] = seq[j++];
    }
    seq.swap(tmp);
  }
  return inv;
}

/// Un-normalized Kendall distance with neutral penalty p = 1/2 for pairs that
/// only one list ranks. Returned alongside the size of the item union.
struct KendallCount {
  double penalty = 0.0;
  std::size_t union_size = 0;
};

inline KendallCount kendall_count(const EncodedList& a, const EncodedList& b) {
  auto& s = pair_scratch();
  const std::size_t common = match(a, b, s);
  const std::size_t only_a = a.size() - common;
  const std::size_t only_b = b.size() - common;

  // Both ranked by both lists: discordant pairs.
  s.seq.clear();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (s.a_pos_in_b[i] >= 0) s.seq.push_back(s.a_pos_in_b[i]);
  }
  double penalty = static_cast<double>(count_inversions(s.seq, s.tmp));

  // Both in one list, only the lower-ranked one in the other list: the
  // other list implicitly places the absent item below, so the pair is
  // discordant exactly when the absent item is ranked higher here.
  std::size_t common_below = 0;
  for (std::size_t i = a.size(); i-- > 0;) {
    if (s.a_pos_in_b[i] >= 0) {
      ++common_below;
    } else {
      penalty += static_cast<double>(common_below);
    }
  }
  common_below = 0;
  for (std::size_t j = b.size(); j-- > 0;) {
    if (s.b_common[j]) {
      ++common_below;
    } else {
      penalty += static_cast<double>(common_below);
    }
  }

  // One item only in a, the other only in b: each list ranks its own above.
  penalty += static_cast<double>(only_a) * static_cast<double>(only_b);
  // Both items only in one list: no information in the other.
  const auto choose2 = [](std::size_t n) { return static_cast<double>(n) * (n - (n > 0)) / 2.0; };
  penalty += kKendallNeutralPenalty * (choose2(only_a) + choose2(only_b));
  return KendallCount{penalty, a.size() + b.size() - common};
}

/// Largest item universe for which PrefixBits is used.
inline constexpr std::size_t kPrefixBitsMaxUniverse = 512;

/// Bitset view of an encoded list over a small universe: row r of `prefix`
/// holds the items ranked above position r, the last row the whole list.
struct PrefixBits {
  std::vector<std::uint64_t> prefix;
  std::vector<std::int16_t> pos;  // by item id, -1 when absent
};

inline std::size_t bit_words(std::size_t universe) { return (universe + 63) / 64; }

inline PrefixBits prefix_bits(const EncodedList& l, std::size_t universe) {
  const std::size_t words = bit_words(universe);
  PrefixBits out;
  out.prefix.assign((l.size() + 1) * words, 0);
  out.pos.assign(universe, -1);
  for (std::size_t r = 0; r < l.size(); ++r) {
    const auto id = static_cast<std::size_t>(l.items[r]);
    out.pos[id] = static_cast<std::int16_t>(r);
    std::copy_n(out.prefix.begin() + static_cast<std::ptrdiff_t>(r * words), words,
                out.prefix.begin() + static_cast<std::ptrdiff_t>((r + 1) * words));
    out.prefix[(r + 1) * words + id / 64] |= std::uint64_t{1} << (id % 64);
  }
  return out;
}

/// Same penalty as kendall_count, from popcounts. For a common item x the
/// pairs it closes off are the items above it in a that are not above it in
/// b (inversions plus a-only items), and the b-only items above it in b.
inline KendallCount kendall_count(const EncodedList& a, const PrefixBits& pa, const EncodedList& b,
                                  const PrefixBits& pb, std::size_t words) {
  const std::uint64_t* all_a = pa.prefix.data() + a.size() * words;
  const std::uint64_t* all_b = pb.prefix.data() + b.size() * words;
  std::size_t common = 0;
  for (std::size_t w = 0; w < words; ++w) common += static_cast<std::size_t>(std::popcount(all_a[w] & all_b[w]));
  std::uint64_t closed = 0;
  for (std::size_t r = 0; r < a.size(); ++r) {
    const int in_b = pb.pos[static_cast<std::size_t>(a.items[r])];
    if (in_b < 0) continue;
    const std::uint64_t* above_a = pa.prefix.data() + r * words;
    const std::uint64_t* above_b = pb.prefix.data() + static_cast<std::size_t>(in_b) * words;
    for (std::size_t w = 0; w < words; ++w) {
      closed += static_cast<std::uint64_t>(std::popcount(above_a[w] & ~above_b[w])) +
                static_cast<std::uint64_t>(std::popcount(above_b[w] & ~all_a[w]));
    }
  }
  const std::size_t only_a = a.size() - common;
  const std::size_t only_b = b.size() - common;
  double penalty = static_cast<double>(closed);
  penalty += static_cast<double>(only_a) * static_cast<double>(only_b);
  const auto choose2 = [](std::size_t n) { return static_cast<double>(n) * (n - (n > 0)) / 2.0; };
  penalty += kKendallNeutralPenalty * (choose2(only_a) + choose2(only_b));
  return KendallCount{penalty, a.size() + b.size() - common};
}

inline double normalized_kendall(const KendallCount& c, DistanceDiagnostics* diag = nullptr) {
  if (c.union_size < 2) {
    if (diag) diag->degenerate = true;
    return 0.0;
  }
  const double pairs = static_cast<double>(c.union_size) * (c.union_size - 1) / 2.0;
  return std::clamp(c.penalty / pairs, 0.0, 1.0);
}

inline double kendall(const EncodedList& a, const EncodedList& b,
                      DistanceDiagnostics* diag = nullptr) {
  return normalized_kendall(kendall_count(a, b), diag);
}

/// Extrapolated rank-biased overlap for lists of possibly different depth.
inline double rbo_similarity(const EncodedList& a, const EncodedList& b, double p) {
  const EncodedList& shorter = a.size() <= b.size() ? a : b;
  const EncodedList& longer = a.size() <= b.size() ? b : a;
  const std::size_t s = shorter.size();
  const std::size_t l = longer.size();
  if (l == 0) return 1.0;
  if (s == 0) return 0.0;

  // arrivals[d]: common items whose deeper occurrence is at depth d (1-based).
  thread_local std::vector<int> arrivals;
  arrivals.assign(l + 1, 0);
  std::size_t i = 0, j = 0;
  while (i < shorter.by_id.size() && j < longer.by_id.size()) {
    if (shorter.by_id[i].first < longer.by_id[j].first) {
      ++i;
    } else if (longer.by_id[j].first < shorter.by_id[i].first) {
      ++j;
    } else {
      const int depth = std::max(shorter.by_id[i].second, longer.by_id[j].second) + 1;
      ++arrivals[static_cast<std::size_t>(depth)];
      ++i;
      ++j;
    }
  }

  double sum = 0.0;
  double weight = 1.0;  // p^d
  double overlap = 0.0;
  double overlap_at_s = 0.0;
  for (std::size_t d = 1; d <= l; ++d) {
    overlap += arrivals[d];
    weight *= p;
    sum += overlap / static_cast<double>(d) * weight;
    if (d == s) overlap_at_s = overlap;
    if (d > s) {
      sum += overlap_at_s * static_cast<double>(d - s) / (static_cast<double>(s) * d) * weight;
    }
  }
  const double tail = ((overlap - overlap_at_s) / static_cast<double>(l) +
                       overlap_at_s / static_cast<double>(s)) * weight;
  return std::clamp((1.0 - p) / p * sum + tail, 0.0, 1.0);
}

inline double rbo(const EncodedList& a, const EncodedList& b, double p) {
  return 1.0 - rbo_similarity(a, b, p);
}

inline double topk_overlap(const EncodedList& a, const EncodedList& b, std::size_t k) {
  const std::size_t ka = std::min(k, a.size());
  const std::size_t kb = std::min(k, b.size());
  const std::size_t denom = std::max(ka, kb);
  if (denom == 0) return 0.0;
  std::size_t common = 0;
  std::size_t i = 0, j = 0;
  while (i < a.by_id.size() && j < b.by_id.size()) {
    if (a.by_id[i].first < b.by_id[j].first) {
      ++i;
    } else if (b.by_id[j].first < a.by_id[i].first) {
      ++j;
    } else {
      if (static_cast<std::size_t>(a.by_id[i].second) < ka &&
          static_cast<std::size_t>(b.by_id[j].second) < kb) {
        ++common;
      }
      ++i;
      ++j;
    }
  }
  return 1.0 - static_cast<double>(common) / static_cast<double>(denom);
}

inline AttributeDistribution distribution_of(const EncodedList& list, std::size_t m,
                                             std::size_t k, Weighting weighting) {
  AttributeDistribution out{std::vector<double>(m, 0.0), 0.0};
  const std::size_t n = std::min(k, list.size());
  if (n == 0) {
    out.unannotated = 1.0;
    return out;
  }
  if (list.width != m + 1) throw SchemaError("list was not encoded for this attribute");
  double total_weight = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const double w = weighting == Weighting::uniform
                         ? 1.0
                         : 1.0 / std::log2(static_cast<double>(r) + 2.0);
    total_weight += w;
    const auto row = list.row(r);
    for (std::size_t v = 0; v < m; ++v) out.mass[v] += w * row[v];
    out.unannotated += w * row[m];
  }
  for (double& v : out.mass) v /= total_weight;
  out.unannotated /= total_weight;
  return out;
}

}  // namespace detail

/// Normalized Kendall tau distance between two strict rankings. Pairs are
/// taken over the union of both lists; items missing from one list follow the
/// top-k convention (absent items rank below present ones, pairs both absent
/// from one list cost 1/2). Normalized by n(n-1)/2 over the union size n.
inline double kendall_distance(const RankedList& a, const RankedList& b,
                               DistanceDiagnostics* diag = nullptr) {
  detail::Interner interner;
  const auto ea = detail::encode(a, interner);
  const auto eb = detail::encode(b, interner);
  return detail::kendall(ea, eb, diag);
}

/// Raw Kendall penalty (discordant-pair count, halves for one-sided pairs).
inline double kendall_pair_count(const RankedList& a, const RankedList& b) {
  detail::Interner interner;
  const auto ea = detail::encode(a, interner);
  const auto eb = detail::encode(b, interner);
  return detail::kendall_count(ea, eb).penalty;
}

inline void check_persistence(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw ParameterError("RBO persistence must lie in (0, 1), got " + std::to_string(p));
  }
}

/// 1 - RBO_ext(a, b, p).
inline double rbo_distance(const RankedList& a, const RankedList& b, double persistence) {
  check_persistence(persistence);
  detail::Interner interner;
  const auto ea = detail::encode(a, interner);
  const auto eb = detail::encode(b, interner);
  return detail::rbo(ea, eb, persistence);
}

/// 1 - |top_k(a) ∩ top_k(b)| / max(min(k,|a|), min(k,|b|)).
inline double topk_overlap_distance(const RankedList& a, const RankedList& b, std::size_t k) {
  if (k == 0) throw ParameterError("top-k depth must be >= 1");
  detail::Interner interner;
  const auto ea = detail::encode(a, interner);
  const auto eb = detail::encode(b, interner);
  return detail::topk_overlap(ea, eb, k);
}

inline void check_differentiating(const AttributeSchema& attr) {
  validate(attr);
  if (attr.kind != AttributeKind::differentiating_content) {
    throw SchemaError("attribute '" + attr.name + "' is not a differentiating attribute");
  }
}

/// Share of the top-k results about each value of attr.
inline AttributeDistribution attribute_distribution(const RankedList& list,
                                                    const AttributeSchema& attr, std::size_t k,
                                                    Weighting weighting = Weighting::uniform) {
  if (k == 0) throw ParameterError("top-k depth must be >= 1");
  check_differentiating(attr);
  detail::Interner interner;
  const auto enc = detail::encode(list, interner, &attr);
  return detail::distribution_of(enc, attr.size(), k, weighting);
}

/// Max-norm distance between two distributions over the annotated values.
/// Each side is renormalized over its annotated mass first.
inline double distribution_distance(const AttributeDistribution& p,
                                    const AttributeDistribution& q) {
  if (p.mass.size() != q.mass.size()) {
    throw SchemaError("distributions over different value sets (" +
                      std::to_string(p.mass.size()) + " vs " + std::to_string(q.mass.size()) +
                      " values)");
  }
  const double tp = p.annotated_total();
  const double tq = q.annotated_total();
  if (tp <= kWeightTolerance || tq <= kWeightTolerance) {
    throw UndefinedMeasureError("distribution has no annotated mass");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < p.mass.size(); ++i) {
    worst = std::max(worst, std::abs(p.mass[i] / tp - q.mass[i] / tq));
  }
  return std::min(worst, 1.0);
}

/// Configuration of the user distance D_u.
struct UserMetric {
  std::vector<std::string> relevant_attrs;
  /// Declared span (max - min) of each numeric attribute.
  std::map<std::string, double> numeric_ranges;
};

/// Gower-style mean of per-attribute dissimilarities over the relevant
/// non-protected attributes. Protected attributes are never read.
inline double user_distance(const UserProfile& u1, const UserProfile& u2,
                            const UserMetric& metric) {
  if (metric.relevant_attrs.empty()) throw ParameterError("user distance needs relevant attributes");
  double total = 0.0;
  for (const auto& name : metric.relevant_attrs) {
    const auto i1 = u1.other.find(name);
    const auto i2 = u2.other.find(name);
    if (i1 == u1.other.end()) throw ProfileError("user " + u1.user_id + " lacks attribute " + name);
    if (i2 == u2.other.end()) throw ProfileError("user " + u2.user_id + " lacks attribute " + name);
    const auto& v1 = i1->second;
    const auto& v2 = i2->second;
    if (v1.index() != v2.index()) {
      throw ProfileError("attribute " + name + " is numeric for one user and categorical for the other");
    }
    if (const auto* x = std::get_if<double>(&v1)) {
      const auto range = metric.numeric_ranges.find(name);
      if (range == metric.numeric_ranges.end() || !(range->second > 0.0)) {
        throw ParameterError("numeric attribute " + name + " has no positive declared range");
      }
      total += std::min(1.0, std::abs(*x - std::get<double>(v2)) / range->second);
    } else {
      total += std::get<std::string>(v1) == std::get<std::string>(v2) ? 0.0 : 1.0;
    }
  }
  return total / static_cast<double>(metric.relevant_attrs.size());
}

inline double user_distance(const UserProfile& u1, const UserProfile& u2,
                            const std::vector<std::string>& relevant_attrs) {
  return user_distance(u1, u2, UserMetric{relevant_attrs, {}});
}

}  // namespace biasmeter
