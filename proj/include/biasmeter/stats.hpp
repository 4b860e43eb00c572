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

// Significance and uncertainty for class-level measures.
//
// Both procedures resample users, not queries: permutation_test shuffles the
// protected-class labels across profiles, bootstrap_ci resamples users with
// replacement within each class. Replicate r always draws from the stream
// derive_key(seed, "permutation"|"bootstrap", r), so results do not depend on
// thread count or evaluation order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "biasmeter/errors.hpp"
#include "biasmeter/measures.hpp"
#include "biasmeter/parallel.hpp"
#include "biasmeter/random.hpp"

namespace biasmeter {

inline constexpr std::size_t kMinResamples = 100;
inline constexpr std::size_t kMinBootstrapPopulation = 5;
/// Null replicates within this of the observed value count as ties.
inline constexpr double kTieTolerance = 1e-12;

struct NullSummary {
  double mean = 0.0;
  double sd = 0.0;
  double q05 = 0.0;
  double q50 = 0.0;
  double q95 = 0.0;
};

struct SignificanceResult {
  std::string measure;
  double observed = 0.0;
  NullSummary null_distribution;
  double p_value = 1.0;
  std::size_t n_permutations = 0;
  std::uint64_t seed = 0;
};

struct BootstrapInterval {
  std::string measure;
  double estimate = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  double confidence_level = 0.0;
  std::size_t n_resamples = 0;
  std::uint64_t seed = 0;
};

/// Linear-interpolation quantile of sorted data (Hyndman-Fan type 7).
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline NullSummary summarize(std::vector<double> values) {
  NullSummary s;
  if (values.empty()) return s;
  double total = 0.0;
  for (double v : values) total += v;
  s.mean = total / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.sd = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
  std::sort(values.begin(), values.end());
  s.q05 = quantile_sorted(values, 0.05);
  s.q50 = quantile_sorted(values, 0.50);
  s.q95 = quantile_sorted(values, 0.95);
  return s;
}

inline bool is_permutation_measure(Measure m) {
  return m == Measure::group_user_bias || m == Measure::probabilistic_group_bias ||
         m == Measure::echo_chamber || m == Measure::combined_bias_classes;
}

namespace detail {

inline std::optional<VariantIndex> variants_for(const PreparedAudit& prep, const std::vector<Measure>& measures) {
  for (Measure m : measures) {
    if (m == Measure::probabilistic_group_bias) return build_variants(prep);
  }
  return std::nullopt;
}

}  // namespace detail

/// One-sided label-permutation tests with the add-one p-value
/// (1 + #{null >= observed}) / (1 + n_permutations). All measures see the same
/// label permutations, so each result equals a separate permutation_test call.
inline std::vector<SignificanceResult> permutation_tests(const AuditInput& in, const std::vector<Measure>& measures,
                                                         std::size_t n_permutations, std::uint64_t seed) {
  for (Measure m : measures) {
    if (!is_permutation_measure(m)) throw ParameterError(to_string(m) + " is not a group-level measure");
  }
  if (n_permutations < kMinResamples) {
    throw ParameterError("permutation test needs at least 100 permutations");
  }
  if (measures.empty()) return {};
  const auto prep = detail::prepare(in);
  const auto variants = detail::variants_for(prep, measures);
  const detail::VariantIndex* vi = variants ? &*variants : nullptr;

  const auto observed =
      detail::class_statistics(prep, measures, detail::assignment_from_labels(prep.in_protected), vi);
  std::vector<std::vector<double>> null(n_permutations);
  detail::parallel_for(n_permutations, [&](std::size_t r) {
    SplitMix64 rng(derive_key(seed, "permutation", static_cast<std::uint64_t>(r)));
    std::vector<char> labels = prep.in_protected;
    shuffle(labels, rng);
    null[r] = detail::class_statistics(prep, measures, detail::assignment_from_labels(labels), vi);
  });

  std::vector<SignificanceResult> out(measures.size());
  for (std::size_t i = 0; i < measures.size(); ++i) {
    auto& res = out[i];
    res.measure = to_string(measures[i]);
    res.n_permutations = n_permutations;
    res.seed = seed;
    res.observed = observed[i];
    std::vector<double> column(n_permutations);
    std::size_t at_least = 0;
    for (std::size_t r = 0; r < n_permutations; ++r) {
      column[r] = null[r][i];
      at_least += column[r] >= res.observed - kTieTolerance;
    }
    res.p_value = static_cast<double>(1 + at_least) / static_cast<double>(1 + n_permutations);
    res.null_distribution = summarize(std::move(column));
  }
  return out;
}

inline SignificanceResult permutation_test(const AuditInput& in, Measure measure,
                                           std::size_t n_permutations, std::uint64_t seed) {
  return permutation_tests(in, {measure}, n_permutations, seed).front();
}

/// Percentile bootstrap over users, resampled with replacement inside each
/// class so both classes keep their sizes. Measures share resamples.
inline std::vector<BootstrapInterval> bootstrap_cis(const AuditInput& in, const std::vector<Measure>& measures,
                                                    std::size_t n_resamples, double confidence_level,
                                                    std::uint64_t seed) {
  for (Measure m : measures) {
    if (m == Measure::individual_user_bias) throw ParameterError("bootstrap supports class-level measures only");
  }
  if (n_resamples < kMinResamples) throw ParameterError("bootstrap needs at least 100 resamples");
  if (!(confidence_level > 0.0 && confidence_level < 1.0)) {
    throw ParameterError("confidence level must lie in (0, 1)");
  }
  if (in.profiles.size() < kMinBootstrapPopulation) {
    throw SmallSampleError("bootstrap needs at least 5 users, got " + std::to_string(in.profiles.size()));
  }
  if (measures.empty()) return {};
  const auto prep = detail::prepare(in);
  const auto variants = detail::variants_for(prep, measures);
  const detail::VariantIndex* vi = variants ? &*variants : nullptr;
  const auto base = detail::assignment_from_labels(prep.in_protected);
  detail::require_classes(base);

  const auto estimate = detail::class_statistics(prep, measures, base, vi);
  std::vector<std::vector<double>> stats(n_resamples);
  detail::parallel_for(n_resamples, [&](std::size_t r) {
    SplitMix64 rng(derive_key(seed, "bootstrap", static_cast<std::uint64_t>(r)));
    detail::Assignment a;
    for (std::size_t i = 0; i < base.protected_users.size(); ++i) {
      a.protected_users.push_back(base.protected_users[rng.below(base.protected_users.size())]);
    }
    for (std::size_t i = 0; i < base.unprotected_users.size(); ++i) {
      a.unprotected_users.push_back(base.unprotected_users[rng.below(base.unprotected_users.size())]);
    }
    stats[r] = detail::class_statistics(prep, measures, a, vi);
  });

  std::vector<BootstrapInterval> out(measures.size());
  for (std::size_t i = 0; i < measures.size(); ++i) {
    auto& ci = out[i];
    ci.measure = to_string(measures[i]);
    ci.confidence_level = confidence_level;
    ci.n_resamples = n_resamples;
    ci.seed = seed;
    ci.estimate = estimate[i];
    std::vector<double> column(n_resamples);
    for (std::size_t r = 0; r < n_resamples; ++r) column[r] = stats[r][i];
    std::sort(column.begin(), column.end());
    ci.lo = quantile_sorted(column, (1.0 - confidence_level) / 2.0);
    ci.hi = quantile_sorted(column, (1.0 + confidence_level) / 2.0);
  }
  return out;
}

inline BootstrapInterval bootstrap_ci(const AuditInput& in, Measure measure, std::size_t n_resamples,
                                      double confidence_level, std::uint64_t seed) {
  return bootstrap_cis(in, {measure}, n_resamples, confidence_level, seed).front();
}

}  // namespace biasmeter
