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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "calrec/error.hpp"
#include "calrec/metrics.hpp"

using namespace calrec;

namespace {

using Items = std::vector<ItemId>;

constexpr UtilityKind kAllKinds[] = {UtilityKind::kPrecision, UtilityKind::kRecall,
                                     UtilityKind::kF1, UtilityKind::kNdcg};

}  // namespace

TEST_CASE("precision examples") {
  CHECK(precision_at(Items{1, 2}, Items{1, 2}, 2) == 1.0);
  CHECK(precision_at(Items{1, 2}, Items{3, 4}, 2) == 0.0);
  CHECK(precision_at(Items{5, 1, 7, 8}, Items{1, 2, 3}, 4) == 0.25);
  // Short lists still divide by k.
  CHECK(precision_at(Items{1}, Items{1}, 4) == 0.25);
  CHECK_THROWS_AS(precision_at(Items{1}, Items{1}, 0), ValidationError);
}

TEST_CASE("recall examples") {
  CHECK(recall_at(Items{3, 1, 2}, Items{1, 2, 3}, 3) == 1.0);
  CHECK(recall_at(Items{4, 5}, Items{1, 2}, 2) == 0.0);
  CHECK(recall_at(Items{1, 9, 3, 8}, Items{1, 2, 3, 4}, 4) == 0.5);
  CHECK_THROWS_AS(recall_at(Items{1}, Items{}, 1), ValidationError);
}

TEST_CASE("f1 examples") {
  CHECK(f1_at(Items{1}, Items{1}, 1) == 1.0);
  CHECK(f1_at(Items{4, 5}, Items{1, 2}, 2) == 0.0);
  CHECK(f1_at(Items{1, 7}, Items{1, 2}, 2) == 0.5);
  CHECK_THROWS_AS(f1_at(Items{1}, Items{}, 1), ValidationError);
}

TEST_CASE("ndcg examples") {
  CHECK(ndcg_at(Items{1, 2, 9}, Items{1, 2}, 3) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(ndcg_at(Items{8, 9}, Items{1, 2}, 2) == 0.0);
  CHECK(ndcg_at(Items{8, 1}, Items{1}, 2) ==
        doctest::Approx(1.0 / std::log2(3.0)).epsilon(1e-15));
  CHECK(ndcg_at(Items{8, 1}, Items{1}, 2) == doctest::Approx(0.6309).epsilon(1e-4));
  CHECK_THROWS_AS(ndcg_at(Items{1}, Items{}, 1), ValidationError);
}

TEST_CASE("metric properties on random lists") {
  Rng rng(4);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t num_items = 5 + rng() % 40;
    Items all(num_items);
    for (ItemId i = 0; i < num_items; ++i) all[i] = i;
    std::shuffle(all.begin(), all.end(), rng);
    const Items recommended(all.begin(), all.begin() + 1 + rng() % num_items);
    Items relevant;
    for (ItemId i = 0; i < num_items; ++i) {
      if (rng() % 3 == 0) relevant.push_back(i);
    }
    if (relevant.empty()) relevant.push_back(0);
    double prev_recall = 0.0;
    for (std::size_t k = 1; k <= num_items + 2; ++k) {
      for (auto kind : kAllKinds) {
        const double v = metric_at(kind, recommended, relevant, k);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0 + 1e-15);
      }
      const double recall = recall_at(recommended, relevant, k);
      CHECK(recall >= prev_recall);
      prev_recall = recall;
      // F1 closed form versus the harmonic mean of precision and recall.
      const double precision = precision_at(recommended, relevant, k);
      const double f1 = f1_at(recommended, relevant, k);
      if (precision > 0.0) {
        const double harmonic = 2.0 * precision * recall / (precision + recall);
        CHECK(f1 == doctest::Approx(harmonic).epsilon(1e-12));
      } else {
        CHECK(f1 == 0.0);
      }
    }
  }
}

TEST_CASE("metric_column names") {
  CHECK(metric_column(UtilityKind::kF1, 10) == "f1@10");
  CHECK(metric_column(UtilityKind::kNdcg, std::nullopt) == "ndcg@perk");
}

TEST_CASE("evaluate single user and skip count") {
  // User 1 has an empty test set and is skipped.
  const Dataset d(2, 6, {{0, 0}, {1, 1}}, {}, {{0, 2}, {0, 3}});
  const std::vector<UserRecommendation> recs{{0, {2, 4, 3}, std::nullopt},
                                             {1, {0, 2}, std::nullopt}};
  const std::vector<UtilityKind> metrics{UtilityKind::kPrecision, UtilityKind::kRecall};
  const std::vector<std::size_t> ks{1, 3};
  const EvalResult r = evaluate(recs, d, Split::kTest, metrics, ks);
  CHECK(r.users == std::vector<UserId>{0});
  CHECK(r.users_skipped == 1);
  CHECK(r.mean.at("precision@1") == 1.0);
  CHECK(r.mean.at("precision@3") == doctest::Approx(2.0 / 3.0));
  CHECK(r.mean.at("recall@3") == 1.0);
  CHECK(r.mean.at("recall@1") == 0.5);
  CHECK(r.mean.size() == 4);
}

TEST_CASE("evaluate personalized cutoffs add perk columns") {
  const Dataset d(2, 6, {}, {}, {{0, 2}, {1, 1}, {1, 5}});
  const std::vector<UserRecommendation> recs{{0, {2}, 1}, {1, {1, 3, 5}, 3}};
  const std::vector<UtilityKind> metrics{UtilityKind::kF1};
  const std::vector<std::size_t> ks{2};
  const EvalResult r = evaluate(recs, d, Split::kTest, metrics, ks);
  // user 0: f1@perk = 2*1/(1+1) = 1; user 1: 2*2/(3+2) = 0.8
  CHECK(r.per_user.at("f1@perk") == std::vector<double>{1.0, 0.8});
  CHECK(r.mean.at("f1@perk") == doctest::Approx(0.9));
}

TEST_CASE("evaluate errors") {
  const Dataset d(2, 4, {}, {}, {{0, 1}});
  const std::vector<UtilityKind> metrics{UtilityKind::kRecall};
  const std::vector<std::size_t> ks{1};
  const std::vector<UserRecommendation> unknown{{5, {1}, std::nullopt}};
  CHECK_THROWS_AS(evaluate(unknown, d, Split::kTest, metrics, ks), ValidationError);
  const std::vector<UserRecommendation> dup{{0, {1}, std::nullopt}, {0, {2}, std::nullopt}};
  CHECK_THROWS_AS(evaluate(dup, d, Split::kTest, metrics, ks), ValidationError);
  const std::vector<UserRecommendation> bad_item{{0, {9}, std::nullopt}};
  CHECK_THROWS_AS(evaluate(bad_item, d, Split::kTest, metrics, ks), ValidationError);
  const std::vector<UserRecommendation> skipped{{1, {1}, std::nullopt}};
  CHECK_THROWS_AS(evaluate(skipped, d, Split::kTest, metrics, ks), ValidationError);
  const std::vector<std::size_t> zero_k{0};
  const std::vector<UserRecommendation> ok{{0, {1}, std::nullopt}};
  CHECK_THROWS_AS(evaluate(ok, d, Split::kTest, metrics, zero_k), ValidationError);
  const Dataset two(2, 4, {}, {}, {{0, 1}, {1, 2}});
  const std::vector<UserRecommendation> mixed{{0, {1}, 1}, {1, {2}, std::nullopt}};
  CHECK_THROWS_AS(evaluate(mixed, two, Split::kTest, metrics, ks), ValidationError);
}

TEST_CASE("evaluate self-consistency and permutation invariance") {
  Rng rng(11);
  std::vector<Interaction> test;
  std::vector<UserRecommendation> recs;
  for (UserId u = 0; u < 40; ++u) {
    Items items;
    for (ItemId i = 0; i < 30; ++i) {
      if (rng() % 4 == 0) items.push_back(i);
    }
    if (items.empty()) items.push_back(u % 30);
    for (ItemId i : items) test.push_back({u, i});
    auto shuffled = items;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    recs.push_back({u, shuffled, std::nullopt});
  }
  const Dataset d(40, 30, {}, {}, test);
  const std::vector<UtilityKind> metrics(std::begin(kAllKinds), std::end(kAllKinds));
  const std::vector<std::size_t> ks{1};
  const EvalResult r = evaluate(recs, d, Split::kTest, metrics, ks);
  // Each list is exactly its relevant set, so precision@1 is 1 for everyone.
  CHECK(r.mean.at("precision@1") == 1.0);
  auto permuted = recs;
  std::shuffle(permuted.begin(), permuted.end(), rng);
  const EvalResult p = evaluate(permuted, d, Split::kTest, metrics, ks);
  for (const auto& [column, value] : r.mean) {
    CHECK(p.mean.at(column) == doctest::Approx(value).epsilon(1e-12));
  }
}
