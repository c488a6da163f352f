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

#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "calrec/dataset.hpp"
#include "calrec/perk.hpp"

namespace calrec {

// Realized metrics of a ranked list against a sorted relevant set. Only the
// first min(k, |recommended|) items count; precision still divides by k.
double precision_at(std::span<const ItemId> recommended,
                    std::span<const ItemId> relevant, std::size_t k);
double recall_at(std::span<const ItemId> recommended,
                 std::span<const ItemId> relevant, std::size_t k);
// 2 * hits / (k + |relevant|)
double f1_at(std::span<const ItemId> recommended,
             std::span<const ItemId> relevant, std::size_t k);
// Binary gains, log2 discount, ideal list of min(|relevant|, k) hits.
double ndcg_at(std::span<const ItemId> recommended,
               std::span<const ItemId> relevant, std::size_t k);

double metric_at(UtilityKind metric, std::span<const ItemId> recommended,
                 std::span<const ItemId> relevant, std::size_t k);

struct UserRecommendation {
  UserId user = 0;
  std::vector<ItemId> items;
  // Set for personalized cuts; adds a "<metric>@perk" column evaluated at
  // this user's own cutoff.
  std::optional<std::size_t> k_star;
};

// Column name for a metric at a fixed cutoff or at the personalized one.
std::string metric_column(UtilityKind metric, std::optional<std::size_t> k);

struct EvalResult {
  std::vector<UserId> users;  // evaluated users, in input order
  std::map<std::string, std::vector<double>> per_user;
  std::map<std::string, double> mean;
  std::size_t users_skipped = 0;
};

// Macro-averages every metric at every k (and at k* for rows that carry
// one) over the rows whose user has a non-empty `split` set.
EvalResult evaluate(std::span<const UserRecommendation> recommendations,
                    const Dataset& dataset, Split split,
                    std::span<const UtilityKind> metrics,
                    std::span<const std::size_t> ks);

}  // namespace calrec
