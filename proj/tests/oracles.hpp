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

// Brute-force reference computations for tests. Nothing here calls into the
// library's distance or aggregation kernels.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "biasmeter/random.hpp"

namespace biasmeter::oracle {

using Ids = std::vector<std::string>;

/// Kendall penalty by enumerating every unordered pair of the item union and
/// applying the four top-k cases directly.
inline double kendall_penalty(const Ids& a, const Ids& b, double neutral = 0.5) {
  std::map<std::string, int> pa, pb;
  for (std::size_t i = 0; i < a.size(); ++i) pa[a[i]] = static_cast<int>(i);
  for (std::size_t i = 0; i < b.size(); ++i) pb[b[i]] = static_cast<int>(i);
  std::set<std::string> all(a.begin(), a.end());
  all.insert(b.begin(), b.end());
  const Ids u(all.begin(), all.end());
  double total = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    for (std::size_t j = i + 1; j < u.size(); ++j) {
      const auto& x = u[i];
      const auto& y = u[j];
      const bool xa = pa.count(x), ya = pa.count(y), xb = pb.count(x), yb = pb.count(y);
      if (xa && ya && xb && yb) {
        total += ((pa[x] < pa[y]) != (pb[x] < pb[y])) ? 1.0 : 0.0;
      } else if (xa && ya && (xb != yb)) {
        // b holds exactly one of them and implicitly ranks it above the other.
        const bool a_prefers_x = pa[x] < pa[y];
        total += (a_prefers_x != xb) ? 1.0 : 0.0;
      } else if (xb && yb && (xa != ya)) {
        const bool b_prefers_x = pb[x] < pb[y];
        total += (b_prefers_x != xa) ? 1.0 : 0.0;
      } else if ((xa && !xb && yb && !ya) || (ya && !yb && xb && !xa)) {
        total += 1.0;
      } else {
        total += neutral;  // both only in the same list
      }
    }
  }
  return total;
}

inline double kendall_normalized(const Ids& a, const Ids& b) {
  std::set<std::string> all(a.begin(), a.end());
  all.insert(b.begin(), b.end());
  const double n = static_cast<double>(all.size());
  if (n < 2) return 0.0;
  return kendall_penalty(a, b) / (n * (n - 1) / 2);
}

/// RBO_ext evaluated from prefix-set overlaps.
inline double rbo_ext(const Ids& x, const Ids& y, double p) {
  const Ids& s_list = x.size() <= y.size() ? x : y;
  const Ids& l_list = x.size() <= y.size() ? y : x;
  const std::size_t s = s_list.size(), l = l_list.size();
  if (l == 0) return 1.0;
  if (s == 0) return 0.0;
  const auto overlap = [&](std::size_t d) {
    std::set<std::string> a(s_list.begin(), s_list.begin() + static_cast<long>(std::min(d, s)));
    std::size_t c = 0;
    for (std::size_t i = 0; i < d; ++i) c += a.count(l_list[i]);
    return static_cast<double>(c);
  };
  double sum = 0.0;
  for (std::size_t d = 1; d <= l; ++d) sum += overlap(d) / d * std::pow(p, d);
  const double xs = overlap(s), xl = overlap(l);
  for (std::size_t d = s + 1; d <= l; ++d) sum += xs * (d - s) / (static_cast<double>(s) * d) * std::pow(p, d);
  return (1 - p) / p * sum + ((xl - xs) / l + xs / s) * std::pow(p, l);
}

/// Minimum summed Kendall penalty over all permutations of the item union,
/// and the lexicographically first permutation attaining it.
inline std::pair<double, Ids> kemeny_brute_force(const std::vector<Ids>& lists) {
  std::set<std::string> all;
  for (const auto& l : lists) all.insert(l.begin(), l.end());
  Ids perm(all.begin(), all.end());
  double best = 1e300;
  Ids arg;
  do {
    double score = 0.0;
    for (const auto& l : lists) score += kendall_penalty(perm, l);
    if (score < best - 1e-9) {
      best = score;
      arg = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return {best, arg};
}

/// n distinct ids "x0".."x{n-1}" in random order.
inline Ids random_perm(std::size_t n, SplitMix64& rng, const std::string& prefix = "x") {
  Ids ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back(prefix + std::to_string(i));
  shuffle(ids, rng);
  return ids;
}

/// Random list of length in [0, max_len] drawn from a pool of pool_size ids.
inline Ids random_list(std::size_t pool_size, std::size_t max_len, SplitMix64& rng) {
  Ids pool = random_perm(pool_size, rng);
  pool.resize(std::min<std::size_t>(pool_size, rng.below(max_len + 1)));
  return pool;
}

}  // namespace biasmeter::oracle
