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

#include "biasmeter/simulator.hpp"
#include "biasmeter/stats.hpp"

namespace biasmeter {
namespace {

AuditInput identical_population(std::size_t n) {
  AuditInput in;
  in.protected_class = {"group", "P"};
  in.differentiating_attr = {"stance", {"pro", "con"}, AttributeKind::differentiating_content};
  in.ground_truth = GroundTruth{"stance", {{"pro", 0.5}, {"con", 0.5}}};
  for (std::size_t i = 0; i < n; ++i) {
    const std::string id = "u" + std::to_string(i);
    in.profiles.push_back(UserProfile{id, {{"group", i % 2 ? "P" : "Q"}}, {}});
    in.lists.emplace(ListKey{id, "q"}, RankedList("q", id,
                                                  {{"a", {{"stance", {{"pro", 1.0}}}}},
                                                   {"b", {{"stance", {{"con", 1.0}}}}}}));
  }
  return in;
}

TEST(Quantile, Type7) {
  const std::vector<double> v{1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(quantile_sorted(v, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(quantile_sorted(v, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile_sorted(v, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(quantile_sorted(v, 0.25), 1.75);
}

TEST(PermutationTest, IdenticalListsGivePValueOne) {
  const auto in = identical_population(20);
  for (Measure m : {Measure::group_user_bias, Measure::probabilistic_group_bias, Measure::echo_chamber,
                    Measure::combined_bias_classes}) {
    const auto r = permutation_test(in, m, 199, 7);
    EXPECT_EQ(r.observed, 0.0) << to_string(m);
    EXPECT_EQ(r.p_value, 1.0) << to_string(m);
    EXPECT_EQ(r.n_permutations, 199u);
  }
}

TEST(PermutationTest, Preconditions) {
  const auto in = identical_population(10);
  EXPECT_THROW(permutation_test(in, Measure::individual_user_bias, 200, 1), ParameterError);
  EXPECT_THROW(permutation_test(in, Measure::content_bias_protected, 200, 1), ParameterError);
  EXPECT_THROW(permutation_test(in, Measure::group_user_bias, 99, 1), ParameterError);
}

TEST(PermutationTest, StrongBiasIsSignificant) {
  auto cfg = binary_scenario(60, 2, 11);
  cfg.set_content_bias(0.3);
  const auto in = simulate(cfg);
  const auto r = permutation_test(in, Measure::combined_bias_classes, 199, 3);
  EXPECT_GT(r.observed, 0.4);
  EXPECT_DOUBLE_EQ(r.p_value, 1.0 / 200.0);
  EXPECT_LT(r.null_distribution.q95, r.observed);
}

TEST(PermutationTest, DeterministicAndBounded) {
  auto cfg = binary_scenario(40, 2, 5);
  cfg.ranking_divergence = 0.3;
  const auto in = simulate(cfg);
  for (Measure m : {Measure::group_user_bias, Measure::echo_chamber, Measure::combined_bias_classes}) {
    const auto a = permutation_test(in, m, 150, 99);
    const auto b = permutation_test(in, m, 150, 99);
    EXPECT_EQ(a.p_value, b.p_value);
    EXPECT_EQ(a.observed, b.observed);
    EXPECT_EQ(a.null_distribution.mean, b.null_distribution.mean);
    EXPECT_EQ(a.null_distribution.sd, b.null_distribution.sd);
    EXPECT_GE(a.p_value, 1.0 / 151.0);
    EXPECT_LE(a.p_value, 1.0);
  }
}

TEST(PermutationTest, ReplicatesAreCounterKeyed) {
  // Replicate r depends only on (seed, r): the first 100 of 300 replicates
  // reproduce a 100-replicate run, so the null is independent of scheduling.
  auto cfg = binary_scenario(30, 1, 8);
  const auto in = simulate(cfg);
  const auto prep = detail::prepare(in);
  std::vector<double> manual;
  for (std::uint64_t r = 0; r < 100; ++r) {
    SplitMix64 rng(derive_key(21, "permutation", r));
    auto labels = prep.in_protected;
    shuffle(labels, rng);
    manual.push_back(detail::class_statistic(prep, Measure::combined_bias_classes,
                                             detail::assignment_from_labels(labels), nullptr));
  }
  const auto r = permutation_test(in, Measure::combined_bias_classes, 100, 21);
  EXPECT_EQ(r.null_distribution.mean, summarize(manual).mean);
}

TEST(PermutationTest, JointRunMatchesSeparateRuns) {
  auto cfg = binary_scenario(30, 3, 21);
  cfg.set_content_bias(0.1);
  cfg.ranking_divergence = 0.2;
  const auto in = simulate(cfg);
  const std::vector<Measure> ms{Measure::group_user_bias, Measure::probabilistic_group_bias,
                                Measure::echo_chamber, Measure::combined_bias_classes};
  const auto joint = permutation_tests(in, ms, 120, 8);
  const auto boot = bootstrap_cis(in, ms, 110, 0.9, 8);
  ASSERT_EQ(joint.size(), ms.size());
  for (std::size_t i = 0; i < ms.size(); ++i) {
    const auto one = permutation_test(in, ms[i], 120, 8);
    EXPECT_EQ(joint[i].measure, one.measure);
    EXPECT_EQ(joint[i].observed, one.observed);
    EXPECT_EQ(joint[i].p_value, one.p_value);
    EXPECT_EQ(joint[i].null_distribution.mean, one.null_distribution.mean);
    EXPECT_EQ(joint[i].null_distribution.q95, one.null_distribution.q95);
    const auto ci = bootstrap_ci(in, ms[i], 110, 0.9, 8);
    EXPECT_EQ(boot[i].lo, ci.lo);
    EXPECT_EQ(boot[i].hi, ci.hi);
  }
  EXPECT_TRUE(permutation_tests(in, {}, 120, 8).empty());
}

TEST(Bootstrap, Preconditions) {
  const auto small = identical_population(4);
  EXPECT_THROW(bootstrap_ci(small, Measure::group_user_bias, 200, 0.95, 1), SmallSampleError);
  const auto in = identical_population(10);
  EXPECT_THROW(bootstrap_ci(in, Measure::group_user_bias, 50, 0.95, 1), ParameterError);
  EXPECT_THROW(bootstrap_ci(in, Measure::group_user_bias, 200, 1.0, 1), ParameterError);
  EXPECT_THROW(bootstrap_ci(in, Measure::group_user_bias, 200, 0.0, 1), ParameterError);
}

TEST(Bootstrap, ConstantMeasureGivesZeroWidth) {
  const auto in = identical_population(10);
  const auto ci = bootstrap_ci(in, Measure::combined_bias_classes, 200, 0.9, 4);
  EXPECT_EQ(ci.lo, 0.0);
  EXPECT_EQ(ci.hi, 0.0);
  EXPECT_EQ(ci.estimate, 0.0);
}

TEST(Bootstrap, DeterministicGivenSeed) {
  auto cfg = binary_scenario(30, 2, 17);
  cfg.set_content_bias(0.1);
  const auto in = simulate(cfg);
  const auto a = bootstrap_ci(in, Measure::content_bias_protected, 150, 0.95, 5);
  const auto b = bootstrap_ci(in, Measure::content_bias_protected, 150, 0.95, 5);
  EXPECT_EQ(a.lo, b.lo);
  EXPECT_EQ(a.hi, b.hi);
  EXPECT_LE(a.lo, a.hi);
}

TEST(Bootstrap, IntervalContainsEstimate) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto cfg = binary_scenario(20, 1, 100 + seed);
    cfg.set_content_bias(0.1);
    const auto in = simulate(cfg);
    const auto ci = bootstrap_ci(in, Measure::combined_bias_classes, 200, 0.5 + 0.02 * seed, seed);
    EXPECT_LE(ci.lo, ci.estimate + 1e-12) << seed;
    EXPECT_GE(ci.hi, ci.estimate - 1e-12) << seed;
  }
}

TEST(Bootstrap, CoversInjectedSeparation) {
  // beta = 0.15: class representatives sit at 0.65 and 0.35, separation 0.3.
  int covered = 0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    auto cfg = binary_scenario(100, 2, derive_key(2026, "coverage", trial));
    cfg.set_content_bias(0.15);
    const auto in = simulate(cfg);
    const auto ci = bootstrap_ci(in, Measure::combined_bias_classes, 200, 0.95, trial);
    covered += ci.lo <= 0.3 && 0.3 <= ci.hi;
  }
  EXPECT_GE(covered, 90);
}

}  // namespace
}  // namespace biasmeter
