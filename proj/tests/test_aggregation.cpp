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

#include <gtest/gtest.h>

#include <algorithm>

#include "biasmeter/aggregation.hpp"
#include "oracles.hpp"

namespace biasmeter {
namespace {

using oracle::Ids;

ListCollection collection(const std::vector<Ids>& lists) {
  ListCollection c{{}, "agg"};
  for (const auto& l : lists) c.lists.push_back(make_list(l));
  return c;
}

TEST(Borda, SingleListIsIdentityTruncated) {
  const auto c = collection({{"c", "a", "d", "b"}});
  EXPECT_EQ(aggregate_borda(c, 10).item_ids(), (Ids{"c", "a", "d", "b"}));
  EXPECT_EQ(aggregate_borda(c, 2).item_ids(), (Ids{"c", "a"}));
}

TEST(Borda, Unanimity) {
  const auto c = collection({{"z", "y", "x"}, {"z", "y", "x"}});
  EXPECT_EQ(aggregate_borda(c, 3).item_ids(), (Ids{"z", "y", "x"}));
}

TEST(Borda, FullTieResolvedLexicographically) {
  // Every item scores 4.
  const auto c = collection({{"x1", "x2", "x3"}, {"x3", "x2", "x1"}});
  EXPECT_EQ(aggregate_borda(c, 3).item_ids(), (Ids{"x1", "x2", "x3"}));
}

TEST(Borda, AbsentItemsScoreZero) {
  // a: 3+0, b: 2+3, c: 1+2, d: 0+1.
  const auto c = collection({{"a", "b", "c"}, {"b", "c", "d"}});
  EXPECT_EQ(aggregate_borda(c, 4).item_ids(), (Ids{"b", "a", "c", "d"}));
}

TEST(Borda, AveragesAnnotations) {
  ListCollection c{{}, "agg"};
  c.lists.emplace_back("q", "u1", std::vector<ResultItem>{{"a", {{"stance", {{"pro", 1.0}}}}}});
  c.lists.emplace_back("q", "u2", std::vector<ResultItem>{{"a", {{"stance", {{"con", 1.0}}}}}});
  const auto out = aggregate_borda(c, 1);
  ASSERT_EQ(out.depth(), 1u);
  const auto& ann = out.items()[0].annotations.at("stance");
  EXPECT_DOUBLE_EQ(ann.at("pro"), 0.5);
  EXPECT_DOUBLE_EQ(ann.at("con"), 0.5);
}

TEST(Aggregators, Errors) {
  const ListCollection empty{{}, "none"};
  EXPECT_THROW(aggregate_borda(empty, 3), InputError);
  EXPECT_THROW(aggregate_median_rank(empty, 3), InputError);
  EXPECT_THROW(kemeny_exact(empty), InputError);
  EXPECT_THROW(aggregate_borda(collection({{"a"}}), 0), ParameterError);
  Ids eleven;
  for (int i = 0; i < 11; ++i) eleven.push_back("i" + std::to_string(i));
  EXPECT_THROW(kemeny_exact(collection({eleven})), ComplexityError);
  eleven.pop_back();
  EXPECT_NO_THROW(kemeny_exact(collection({eleven})));
}

TEST(MedianRank, IdentityAndUnanimity) {
  EXPECT_EQ(aggregate_median_rank(collection({{"b", "a", "c"}}), 5).item_ids(), (Ids{"b", "a", "c"}));
  EXPECT_EQ(aggregate_median_rank(collection({{"b", "a"}, {"b", "a"}}), 5).item_ids(), (Ids{"b", "a"}));
}

TEST(MedianRank, OrdersByMedian) {
  // x1 at {1,1,3}, x2 at {2,2,1}.
  const auto c = collection({{"x1", "x2", "x3"}, {"x1", "x2", "x3"}, {"x2", "x3", "x1"}});
  const auto out = aggregate_median_rank(c, 3).item_ids();
  EXPECT_EQ(out[0], "x1");
  EXPECT_EQ(out[1], "x2");
}

TEST(MedianRank, MeanRankThenLexicographicTieBreak) {
  // Medians: a 2, b 2, c 2. Means: a 5/3, b 2, c 7/3 with absent rank 4.
  const auto c = collection({{"a", "b", "c"}, {"b", "c", "a"}, {"c", "a", "b"}});
  EXPECT_EQ(aggregate_median_rank(c, 3).item_ids(), (Ids{"a", "b", "c"}));
  // Absent items get depth + 1.
  const auto d = collection({{"a", "b"}, {"b", "a"}, {"b", "c"}});
  EXPECT_EQ(aggregate_median_rank(d, 3).item_ids(), (Ids{"b", "a", "c"}));
}

TEST(Kemeny, SingleListAndUnanimity) {
  EXPECT_EQ(kemeny_exact(collection({{"d", "b", "a", "c"}})).item_ids(), (Ids{"d", "b", "a", "c"}));
  EXPECT_EQ(kemeny_exact(collection({{"d", "b", "a"}, {"d", "b", "a"}, {"d", "b", "a"}})).item_ids(),
            (Ids{"d", "b", "a"}));
}

TEST(Kemeny, LexicographicTieBetweenOptima) {
  EXPECT_EQ(kemeny_exact(collection({{"x1", "x2"}, {"x2", "x1"}})).item_ids(), (Ids{"x1", "x2"}));
}

TEST(Kemeny, MatchesEnumerationOnRandomInstances) {
  SplitMix64 rng(derive_key(21, "kemeny"));
  for (int t = 0; t < 150; ++t) {
    const std::size_t items = 2 + rng.below(7);  // up to 8
    const std::size_t n_lists = 1 + rng.below(5);
    std::vector<Ids> lists;
    for (std::size_t l = 0; l < n_lists; ++l) {
      Ids perm = oracle::random_perm(items, rng);
      perm.resize(1 + rng.below(items));
      lists.push_back(perm);
    }
    const auto c = collection(lists);
    const auto [best, argmin] = oracle::kemeny_brute_force(lists);
    const auto got = kemeny_exact(c);
    EXPECT_DOUBLE_EQ(kemeny_score(got, c), best);
    EXPECT_EQ(got.item_ids(), argmin);
    EXPECT_LE(kemeny_score(aggregate_borda(c, items), c), 5.0 * best + 1e-9);
  }
}

TEST(Kemeny, FiveItemThreeListEnumeration) {
  const std::vector<Ids> lists = {{"a", "b", "c", "d", "e"}, {"c", "a", "e", "b", "d"}, {"b", "e", "a", "d", "c"}};
  const auto [best, argmin] = oracle::kemeny_brute_force(lists);
  const auto got = kemeny_exact(collection(lists));
  EXPECT_EQ(got.item_ids(), argmin);
  EXPECT_DOUBLE_EQ(kemeny_score(got, collection(lists)), best);
}

TEST(Aggregators, NeutralityOnTieFreeInstances) {
  // Relabel a -> q, b -> p, ... so lexicographic order flips; tie-free inputs must not care.
  const std::vector<Ids> lists = {{"a", "b", "c", "d"}, {"a", "c", "b", "d"}, {"b", "a", "c", "d"}};
  const std::map<std::string, std::string> relabel = {{"a", "s"}, {"b", "r"}, {"c", "q"}, {"d", "p"}};
  std::vector<Ids> mapped;
  for (const auto& l : lists) {
    Ids m;
    for (const auto& x : l) m.push_back(relabel.at(x));
    mapped.push_back(m);
  }
  for (Aggregator method : {Aggregator::borda, Aggregator::median, Aggregator::kemeny}) {
    const auto plain = aggregate(collection(lists), method, 4).item_ids();
    const auto renamed = aggregate(collection(mapped), method, 4).item_ids();
    ASSERT_EQ(plain.size(), renamed.size());
    for (std::size_t i = 0; i < plain.size(); ++i) EXPECT_EQ(relabel.at(plain[i]), renamed[i]);
  }
}

TEST(Aggregators, UnanimityProperty) {
  SplitMix64 rng(derive_key(22, "unanimity"));
  for (int t = 0; t < 100; ++t) {
    const Ids l = oracle::random_perm(1 + rng.below(8), rng);
    const std::size_t k = 1 + rng.below(10);
    Ids expect = l;
    if (expect.size() > k) expect.resize(k);
    const auto c = collection({l, l, l});
    for (Aggregator m : {Aggregator::borda, Aggregator::median, Aggregator::kemeny})
      EXPECT_EQ(aggregate(c, m, k).item_ids(), expect);
  }
}

}  // namespace
}  // namespace biasmeter
