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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <variant>
#include <vector>

#include "biasmeter/errors.hpp"

namespace biasmeter {

/// Reserved attribute value marking an item (or part of one) as not annotated.
inline constexpr std::string_view kUnannotated = "unannotated";

inline constexpr double kWeightTolerance = 1e-9;

/// value -> weight for one differentiating attribute.
using Annotation = std::map<std::string, double>;

struct ResultItem {
  std::string item_id;
  /// attribute name -> weights over that attribute's values.
  std::map<std::string, Annotation> annotations;
};

inline void validate(const ResultItem& item) {
  if (item.item_id.empty()) throw InputError("result item with empty item_id");
  for (const auto& [attr, weights] : item.annotations) {
    double total = 0.0;
    for (const auto& [value, w] : weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) {
        throw InputError("item " + item.item_id + ": negative or non-finite weight for " + attr +
                         "=" + value);
      }
      total += w;
    }
    if (std::abs(total - 1.0) > kWeightTolerance) {
      throw InputError("item " + item.item_id + ": weights for " + attr + " sum to " +
                       std::to_string(total));
    }
  }
}

/// Strict order of annotated items shown to one user for one query. Rank 1 is
/// items()[0].
class RankedList {
 public:
  RankedList() = default;
  RankedList(std::string query_id, std::string user_id, std::vector<ResultItem> items)
      : query_id_(std::move(query_id)), user_id_(std::move(user_id)), items_(std::move(items)) {
    std::unordered_set<std::string_view> seen;
    seen.reserve(items_.size());
    for (const auto& item : items_) {
      validate(item);
      if (!seen.insert(item.item_id).second) {
        throw InputError("duplicate item_id '" + item.item_id + "' in list for user '" +
                         user_id_ + "', query '" + query_id_ + "'");
      }
    }
  }

  const std::string& query_id() const noexcept { return query_id_; }
  const std::string& user_id() const noexcept { return user_id_; }
  const std::vector<ResultItem>& items() const noexcept { return items_; }
  std::size_t depth() const noexcept { return items_.size(); }
  bool empty() const noexcept { return items_.empty(); }

  std::vector<std::string> item_ids() const {
    std::vector<std::string> ids;
    ids.reserve(items_.size());
    for (const auto& item : items_) ids.push_back(item.item_id);
    return ids;
  }

  friend bool operator==(const RankedList& a, const RankedList& b) {
    if (a.query_id_ != b.query_id_ || a.user_id_ != b.user_id_ || a.depth() != b.depth()) {
      return false;
    }
    for (std::size_t i = 0; i < a.depth(); ++i) {
      if (a.items_[i].item_id != b.items_[i].item_id ||
          a.items_[i].annotations != b.items_[i].annotations) {
        return false;
      }
    }
    return true;
  }

 private:
  std::string query_id_;
  std::string user_id_;
  std::vector<ResultItem> items_;
};

/// Convenience for tests and tools: a list of unannotated items.
inline RankedList make_list(const std::vector<std::string>& ids, std::string query_id = "q",
                            std::string user_id = "u") {
  std::vector<ResultItem> items;
  items.reserve(ids.size());
  for (const auto& id : ids) items.push_back(ResultItem{id, {}});
  return RankedList(std::move(query_id), std::move(user_id), std::move(items));
}

using AttributeValue = std::variant<double, std::string>;

struct UserProfile {
  std::string user_id;
  std::map<std::string, std::string> protected_attrs;
  std::map<std::string, AttributeValue> other;
};

inline void validate(const UserProfile& u) {
  if (u.user_id.empty()) throw InputError("profile with empty user_id");
  for (const auto& [name, _] : u.protected_attrs) {
    if (u.other.count(name)) {
      throw InputError("profile " + u.user_id + ": attribute '" + name +
                       "' is both protected and non-protected");
    }
  }
}

enum class AttributeKind { protected_user, differentiating_content };

struct AttributeSchema {
  std::string name;
  std::vector<std::string> values;
  AttributeKind kind = AttributeKind::differentiating_content;

  std::size_t size() const noexcept { return values.size(); }

  std::optional<std::size_t> index_of(std::string_view value) const {
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (values[i] == value) return i;
    }
    return std::nullopt;
  }
};

inline void validate(const AttributeSchema& s) {
  if (s.name.empty()) throw SchemaError("attribute schema with empty name");
  if (s.values.size() < 2) throw SchemaError("attribute '" + s.name + "' needs at least 2 values");
  std::set<std::string> distinct(s.values.begin(), s.values.end());
  if (distinct.size() != s.values.size()) {
    throw SchemaError("attribute '" + s.name + "' has repeated values");
  }
  if (distinct.count(std::string(kUnannotated))) {
    throw SchemaError("attribute '" + s.name + "' uses the reserved value 'unannotated'");
  }
}

struct GroundTruth {
  std::string attribute;
  std::map<std::string, double> probabilities;
};

/// Ground truth as a vector in schema value order. Values the ground truth
/// omits get probability 0.
inline std::vector<double> ground_truth_vector(const GroundTruth& gt, const AttributeSchema& s) {
  if (gt.attribute != s.name) {
    throw SchemaError("ground truth is for '" + gt.attribute + "', expected '" + s.name + "'");
  }
  std::vector<double> out(s.size(), 0.0);
  double total = 0.0;
  for (const auto& [value, p] : gt.probabilities) {
    const auto idx = s.index_of(value);
    if (!idx) throw SchemaError("ground truth value '" + value + "' not in attribute " + s.name);
    if (!(p >= 0.0)) throw SchemaError("negative ground-truth probability for " + value);
    out[*idx] = p;
    total += p;
  }
  if (std::abs(total - 1.0) > kWeightTolerance) {
    throw SchemaError("ground truth for '" + s.name + "' sums to " + std::to_string(total));
  }
  return out;
}

}  // namespace biasmeter
