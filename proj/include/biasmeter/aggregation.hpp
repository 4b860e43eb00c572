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

// Rank aggregation: build one representative list from a multiset of lists.
//
// Ties are always broken by lexicographic item_id so that audits are
// reproducible. The representative's annotations are the occurrence-weighted
// average of the aggregated items' annotations.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "biasmeter/distance.hpp"
#include "biasmeter/errors.hpp"
#include "biasmeter/types.hpp"

namespace biasmeter {

enum class Aggregator { borda, median, kemeny };

/// Largest item universe kemeny_exact will enumerate.
inline constexpr std::size_t kKemenyMaxItems = 10;

struct ListCollection {
  std::vector<RankedList> lists;
  std::string label;
};

namespace detail {

/// Position of each interned id in lexicographic order of the names.
inline std::vector<int> lex_rank(const Interner& interner) {
  std::vector<int> ids(interner.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::sort(ids.begin(), ids.end(),
            [&](int x, int y) { return interner.name(x) < interner.name(y); });
  std::vector<int> rank(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) rank[static_cast<std::size_t>(ids[i])] = static_cast<int>(i);
  return rank;
}

using ListRefs = std::span<const EncodedList* const>;

inline void require_lists(ListRefs lists) {
  if (lists.empty()) throw InputError("aggregation over an empty collection");
}

/// Items present in at least one list, in lexicographic order.
inline std::vector<int> item_union(ListRefs lists, std::span<const int> lex) {
  std::vector<char> seen(lex.size(), 0);
  std::vector<int> out;
  for (const auto* l : lists) {
    for (int id : l->items) {
      if (!seen[static_cast<std::size_t>(id)]) {
        seen[static_cast<std::size_t>(id)] = 1;
        out.push_back(id);
      }
    }
  }
  std::sort(out.begin(), out.end(), [&](int x, int y) {
    return lex[static_cast<std::size_t>(x)] < lex[static_cast<std::size_t>(y)];
  });
  return out;
}

/// Borda: each list awards depth - rank + 1 points; absent items get 0.
inline std::vector<int> borda_order(ListRefs lists, std::size_t k, std::span<const int> lex) {
  require_lists(lists);
  thread_local std::vector<std::int64_t> score;
  thread_local std::vector<char> touched;
  score.assign(lex.size(), 0);
  touched.assign(lex.size(), 0);
  std::vector<int> candidates;
  for (const auto* l : lists) {
    const auto depth = static_cast<std::int64_t>(l->size());
    for (std::size_t r = 0; r < l->size(); ++r) {
      const auto id = static_cast<std::size_t>(l->items[r]);
      score[id] += depth - static_cast<std::int64_t>(r);
      if (!touched[id]) {
        touched[id] = 1;
        candidates.push_back(l->items[r]);
      }
    }
  }
  const auto better = [&](int x, int y) {
    const auto sx = score[static_cast<std::size_t>(x)];
    const auto sy = score[static_cast<std::size_t>(y)];
    if (sx != sy) return sx > sy;
    return lex[static_cast<std::size_t>(x)] < lex[static_cast<std::size_t>(y)];
  };
  const std::size_t n = std::min(k, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(n),
                    candidates.end(), better);
  candidates.resize(n);
  return candidates;
}

/// Median rank, absent items ranked depth + 1; ties by mean rank, then id.
inline std::vector<int> median_order(ListRefs lists, std::size_t k, std::span<const int> lex) {
  require_lists(lists);
  const std::vector<int> items = item_union(lists, lex);
  std::vector<std::size_t> slot(lex.size(), 0);
  for (std::size_t i = 0; i < items.size(); ++i) slot[static_cast<std::size_t>(items[i])] = i;

  const std::size_t n_lists = lists.size();
  std::vector<double> ranks(items.size() * n_lists);
  for (std::size_t li = 0; li < n_lists; ++li) {
    const auto* l = lists[li];
    const double absent = static_cast<double>(l->size()) + 1.0;
    for (std::size_t i = 0; i < items.size(); ++i) ranks[i * n_lists + li] = absent;
    for (std::size_t r = 0; r < l->size(); ++r) {
      ranks[slot[static_cast<std::size_t>(l->items[r])] * n_lists + li] = static_cast<double>(r) + 1.0;
    }
  }
  std::vector<double> median(items.size()), mean(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto first = ranks.begin() + static_cast<std::ptrdiff_t>(i * n_lists);
    auto last = first + static_cast<std::ptrdiff_t>(n_lists);
    std::sort(first, last);
    median[i] = n_lists % 2 == 1 ? first[n_lists / 2]
                                 : 0.5 * (first[n_lists / 2 - 1] + first[n_lists / 2]);
    mean[i] = std::accumulate(first, last, 0.0) / static_cast<double>(n_lists);
  }
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  // items are in lexicographic order already, so a stable sort breaks the last tie.
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    if (median[x] != median[y]) return median[x] < median[y];
    return mean[x] < mean[y];
  });
  order.resize(std::min(k, order.size()));
  std::vector<int> out;
  out.reserve(order.size());
  for (std::size_t i : order) out.push_back(items[i]);
  return out;
}

/// Exact Kemeny consensus by dynamic programming over placed-item subsets.
/// Among optimal permutations the lexicographically smallest id sequence wins.
inline std::vector<int> kemeny_order(ListRefs lists, std::span<const int> lex) {
  require_lists(lists);
  const std::vector<int> items = item_union(lists, lex);
  const std::size_t n = items.size();
  if (n > kKemenyMaxItems) {
    throw ComplexityError("kemeny_exact refuses " + std::to_string(n) + " items (limit " +
                          std::to_string(kKemenyMaxItems) + ")");
  }
  std::vector<std::size_t> slot(lex.size(), n);
  for (std::size_t i = 0; i < n; ++i) slot[static_cast<std::size_t>(items[i])] = i;

  // before[i][j]: penalty of placing item i ahead of item j, summed over lists.
  std::vector<std::int64_t> before(n * n, 0);
  std::vector<int> pos(n);
  for (const auto* l : lists) {
    std::fill(pos.begin(), pos.end(), -1);
    for (std::size_t r = 0; r < l->size(); ++r) pos[slot[static_cast<std::size_t>(l->items[r])]] = static_cast<int>(r);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const bool has_i = pos[i] >= 0, has_j = pos[j] >= 0;
        if (has_i && has_j) {
          before[i * n + j] += pos[j] < pos[i];
        } else if (has_j && !has_i) {
          before[i * n + j] += 1;
        }
      }
    }
  }

  const std::size_t full = (std::size_t{1} << n) - 1;
  // best[S]: cheapest cost of ordering the items outside S after those in S.
  std::vector<std::int64_t> best(full + 1, 0);
  const auto place_cost = [&](std::size_t x, std::size_t placed) {
    std::int64_t c = 0;
    for (std::size_t y = 0; y < n; ++y) {
      if (y != x && !(placed >> y & 1U)) c += before[x * n + y];
    }
    return c;
  };
  for (std::size_t s = full; s-- > 0;) {
    std::int64_t m = std::numeric_limits<std::int64_t>::max();
    for (std::size_t x = 0; x < n; ++x) {
      if (s >> x & 1U) continue;
      m = std::min(m, place_cost(x, s) + best[s | (std::size_t{1} << x)]);
    }
    best[s] = m;
  }
  std::vector<int> out;
  out.reserve(n);
  std::size_t placed = 0;
  while (placed != full) {
    for (std::size_t x = 0; x < n; ++x) {
      if (placed >> x & 1U) continue;
      const std::size_t next = placed | (std::size_t{1} << x);
      if (place_cost(x, placed) + best[next] == best[placed]) {
        out.push_back(items[x]);
        placed = next;
        break;
      }
    }
  }
  return out;
}

/// Encoded representative: chosen items with occurrence-averaged annotation rows.
inline EncodedList with_averaged_annotations(std::vector<int> order, ListRefs lists,
                                             std::size_t universe) {
  EncodedList out;
  out.items = std::move(order);
  out.width = lists.empty() ? 0 : lists.front()->width;
  if (out.width > 0) {
    std::vector<std::size_t> slot(universe, out.items.size());
    for (std::size_t i = 0; i < out.items.size(); ++i) slot[static_cast<std::size_t>(out.items[i])] = i;
    out.annot.assign(out.items.size() * out.width, 0.0);
    std::vector<double> occurrences(out.items.size(), 0.0);
    for (const auto* l : lists) {
      for (std::size_t r = 0; r < l->size(); ++r) {
        const std::size_t i = slot[static_cast<std::size_t>(l->items[r])];
        if (i == out.items.size()) continue;
        occurrences[i] += 1.0;
        const auto row = l->row(r);
        for (std::size_t v = 0; v < out.width; ++v) out.annot[i * out.width + v] += row[v];
      }
    }
    for (std::size_t i = 0; i < out.items.size(); ++i) {
      for (std::size_t v = 0; v < out.width; ++v) out.annot[i * out.width + v] /= occurrences[i];
    }
  }
  out.index();
  return out;
}

inline EncodedList aggregate(Aggregator method, ListRefs lists, std::size_t k,
                             std::span<const int> lex) {
  switch (method) {
    case Aggregator::borda:
      return with_averaged_annotations(borda_order(lists, k, lex), lists, lex.size());
    case Aggregator::median:
      return with_averaged_annotations(median_order(lists, k, lex), lists, lex.size());
    case Aggregator::kemeny: {
      auto order = kemeny_order(lists, lex);
      order.resize(std::min(k, order.size()));
      return with_averaged_annotations(std::move(order), lists, lex.size());
    }
  }
  throw ParameterError("unknown aggregator");
}

/// Averages every attribute's annotations across the occurrences of each item.
/// Occurrences without an attribute count as fully unannotated for it.
inline RankedList materialize(const std::vector<int>& order, const Interner& interner,
                              const ListCollection& c) {
  std::vector<ResultItem> items;
  items.reserve(order.size());
  for (int id : order) {
    const std::string& name = interner.name(id);
    std::vector<const ResultItem*> occurrences;
    for (const auto& l : c.lists) {
      for (const auto& item : l.items()) {
        if (item.item_id == name) {
          occurrences.push_back(&item);
          break;
        }
      }
    }
    ResultItem merged{name, {}};
    for (const auto* occ : occurrences) {
      for (const auto& [attr, _] : occ->annotations) merged.annotations[attr];
    }
    const double n = static_cast<double>(occurrences.size());
    for (auto& [attr, weights] : merged.annotations) {
      for (const auto* occ : occurrences) {
        const auto it = occ->annotations.find(attr);
        if (it == occ->annotations.end()) {
          weights[std::string(kUnannotated)] += 1.0 / n;
        } else {
          for (const auto& [value, w] : it->second) weights[value] += w / n;
        }
      }
    }
    items.push_back(std::move(merged));
  }
  const std::string query = c.lists.empty() ? std::string() : c.lists.front().query_id();
  return RankedList(query, c.label, std::move(items));
}

template <typename OrderFn>
RankedList aggregate_collection(const ListCollection& c, OrderFn&& order_fn) {
  if (c.lists.empty()) throw InputError("aggregation over an empty collection '" + c.label + "'");
  Interner interner;
  std::vector<EncodedList> encoded;
  encoded.reserve(c.lists.size());
  for (const auto& l : c.lists) encoded.push_back(encode(l, interner));
  std::vector<const EncodedList*> refs;
  for (const auto& e : encoded) refs.push_back(&e);
  const auto lex = lex_rank(interner);
  return materialize(order_fn(ListRefs(refs), std::span<const int>(lex)), interner, c);
}

}  // namespace detail

/// Borda count aggregation truncated to depth k.
inline RankedList aggregate_borda(const ListCollection& c, std::size_t k) {
  if (k == 0) throw ParameterError("aggregation depth must be >= 1");
  return detail::aggregate_collection(
      c, [k](detail::ListRefs l, std::span<const int> lex) { return detail::borda_order(l, k, lex); });
}

inline RankedList aggregate_median_rank(const ListCollection& c, std::size_t k) {
  if (k == 0) throw ParameterError("aggregation depth must be >= 1");
  return detail::aggregate_collection(
      c, [k](detail::ListRefs l, std::span<const int> lex) { return detail::median_order(l, k, lex); });
}

/// Permutation of all items minimizing the summed Kendall penalty to every
/// list. At most kKemenyMaxItems distinct items.
inline RankedList kemeny_exact(const ListCollection& c) {
  return detail::aggregate_collection(
      c, [](detail::ListRefs l, std::span<const int> lex) { return detail::kemeny_order(l, lex); });
}

inline RankedList aggregate(const ListCollection& c, Aggregator method, std::size_t k) {
  switch (method) {
    case Aggregator::borda: return aggregate_borda(c, k);
    case Aggregator::median: return aggregate_median_rank(c, k);
    case Aggregator::kemeny: {
      RankedList full = kemeny_exact(c);
      if (full.depth() <= k) return full;
      std::vector<ResultItem> items(full.items().begin(),
                                    full.items().begin() + static_cast<std::ptrdiff_t>(k));
      return RankedList(full.query_id(), full.user_id(), std::move(items));
    }
  }
  throw ParameterError("unknown aggregator");
}

/// Kemeny score of a candidate: summed raw Kendall penalty to every list.
inline double kemeny_score(const RankedList& candidate, const ListCollection& c) {
  double total = 0.0;
  for (const auto& l : c.lists) total += kendall_pair_count(candidate, l);
  return total;
}

}  // namespace biasmeter
