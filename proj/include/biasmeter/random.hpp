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

// Portable pseudo-random numbers.
//
// Every random draw in the library comes from SplitMix64 (Steele, Lea and
// Flood 2014): state += 0x9e3779b97f4a7c15, output = mix(state) with the
// Stafford variant-13 finalizer. Streams are keyed, never shared: a stream
// for (seed, label...) starts from derive_key(seed, label...), where string
// labels are folded in with 64-bit FNV-1a and integer labels directly, each
// step followed by mix(). Doubles take the top 53 bits; bounded integers use
// rejection sampling on the top bits. No std:: distribution is used, so the
// same seed yields the same numbers on every platform and compiler.

#include <cstdint>
#include <limits>
#include <string_view>
#include <vector>

namespace biasmeter {

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace detail {
constexpr std::uint64_t fold_key(std::uint64_t key, std::uint64_t v) noexcept {
  return mix64(key ^ mix64(v + 0x9e3779b97f4a7c15ULL));
}
constexpr std::uint64_t fold_key(std::uint64_t key, std::string_view s) noexcept {
  return fold_key(key, fnv1a64(s));
}
constexpr std::uint64_t fold_key(std::uint64_t key, const char* s) noexcept {
  return fold_key(key, std::string_view(s));
}
}  // namespace detail

/// Stream key for a seed and any sequence of integer or string labels.
template <typename... Labels>
constexpr std::uint64_t derive_key(std::uint64_t seed, const Labels&... labels) noexcept {
  std::uint64_t key = mix64(seed);
  ((key = detail::fold_key(key, labels)), ...);
  return key;
}

/// SplitMix64 generator. Satisfies UniformRandomBitGenerator.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  constexpr explicit SplitMix64(std::uint64_t state = 0) noexcept : state_(state) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }

  /// Uniform in [0, 1).
  constexpr double uniform() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, bound). bound must be > 0.
  constexpr std::uint64_t below(std::uint64_t bound) noexcept {
    if (bound <= 1) return 0;
    // Reject from the largest multiple of bound that fits.
    const std::uint64_t limit = max() - (max() % bound + 1) % bound;
    std::uint64_t x = (*this)();
    while (x > limit) x = (*this)();
    return x % bound;
  }

  constexpr bool bernoulli(double p) noexcept { return uniform() < p; }

  constexpr std::uint64_t state() const noexcept { return state_; }

 private:
  std::uint64_t state_;
};

/// Fisher-Yates shuffle driven by SplitMix64::below.
template <typename T>
void shuffle(std::vector<T>& v, SplitMix64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    using std::swap;
    swap(v[i - 1], v[j]);
  }
}

}  // namespace biasmeter
