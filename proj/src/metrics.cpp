// Copyright 2026 The calrec Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "calrec/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "calrec/error.hpp"

namespace calrec {

namespace {

std::size_t hits_at(std::span<const ItemId> recommended,
                    std::span<const ItemId> relevant, std::size_t k) {
  const std::size_t n = std::min(k, recommended.size());
  std::size_t hits = 0;
  for (std::size_t r = 0; r < n; ++r) {
    if (std::binary_search(relevant.begin(), relevant.end(), recommended[r])) {
      ++hits;
    }
  }
  return hits;
}

void require_k(std::size_t k) {
  if (k < 1) throw ValidationError("cutoff k must be >= 1");
}

void require_relevant(std::span<const ItemId> relevant) {
  if (relevant.empty()) throw ValidationError("relevant set is empty");
}

}  // namespace

double precision_at(std::span<const ItemId> recommended,
                    std::span<const ItemId> relevant, std::size_t k) {
  require_k(k);
  return static_cast<double>(hits_at(recommended, relevant, k)) /
         static_cast<double>(k);
}

double recall_at(std::span<const ItemId> recommended,
                 std::span<const ItemId> relevant, std::size_t k) {
  require_k(k);
  require_relevant(relevant);
  return static_cast<double>(hits_at(recommended, relevant, k)) /
         static_cast<double>(relevant.size());
}

double f1_at(std::span<const ItemId> recommended,
             std::span<const ItemId> relevant, std::size_t k) {
  require_k(k);
  require_relevant(relevant);
  const auto hits = hits_at(recommended, relevant, k);
  if (hits == 0) return 0.0;
  return 2.0 * static_cast<double>(hits) /
         static_cast<double>(k + relevant.size());
}

double ndcg_at(std::span<const ItemId> recommended,
               std::span<const ItemId> relevant, std::size_t k) {
  require_k(k);
  require_relevant(relevant);
  const std::size_t n = std::min(k, recommended.size());
  double dcg = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (std::binary_search(relevant.begin(), relevant.end(), recommended[r])) {
      dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    }
  }
  double idcg = 0.0;
  const std::size_t ideal = std::min(k, relevant.size());
  for (std::size_t r = 0; r < ideal; ++r) {
    idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  }
  return dcg / idcg;
}

double metric_at(UtilityKind metric, std::span<const ItemId> recommended,
                 std::span<const ItemId> relevant, std::size_t k) {
  switch (metric) {
    case UtilityKind::kPrecision:
      return precision_at(recommended, relevant, k);
    case UtilityKind::kRecall:
      return recall_at(recommended, relevant, k);
    case UtilityKind::kF1:
      return f1_at(recommended, relevant, k);
    case UtilityKind::kNdcg:
      return ndcg_at(recommended, relevant, k);
  }
  return 0.0;
}

std::string metric_column(UtilityKind metric, std::optional<std::size_t> k) {
  return std::string(utility_kind_name(metric)) + "@" +
         (k ? std::to_string(*k) : std::string("perk"));
}

EvalResult evaluate(std::span<const UserRecommendation> recommendations,
                    const Dataset& dataset, Split split,
                    std::span<const UtilityKind> metrics,
                    std::span<const std::size_t> ks) {
  for (std::size_t k : ks) require_k(k);
  EvalResult result;
  std::vector<bool> seen(dataset.num_users(), false);
  for (const auto& rec : recommendations) {
    if (rec.user >= dataset.num_users()) {
      throw ValidationError("recommendation for unknown user " +
                            std::to_string(rec.user));
    }
    if (seen[rec.user]) {
      throw ValidationError("duplicate recommendation row for user " +
                            std::to_string(rec.user));
    }
    seen[rec.user] = true;
    for (ItemId i : rec.items) {
      if (i >= dataset.num_items()) {
        throw ValidationError("recommended item " + std::to_string(i) +
                              " out of range");
      }
    }
    const auto relevant = dataset.user_items(split, rec.user);
    if (relevant.empty()) {
      ++result.users_skipped;
      continue;
    }
    result.users.push_back(rec.user);
    for (UtilityKind metric : metrics) {
      for (std::size_t k : ks) {
        result.per_user[metric_column(metric, k)].push_back(
            metric_at(metric, rec.items, relevant, k));
      }
      if (rec.k_star) {
        result.per_user[metric_column(metric, std::nullopt)].push_back(
            metric_at(metric, rec.items, relevant, *rec.k_star));
      }
    }
  }
  if (result.users.empty()) {
    throw ValidationError("no evaluable users: every split set is empty");
  }
  for (const auto& [column, values] : result.per_user) {
    if (values.size() != result.users.size()) {
      throw ValidationError("column " + column +
                            " is missing for some users; mix of personalized "
                            "and fixed rows");
    }
    double sum = 0.0;
    for (double v : values) sum += v;
    result.mean[column] = sum / static_cast<double>(values.size());
  }
  return result;
}

}  // namespace calrec
