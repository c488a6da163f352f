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

#include <span>
#include <string>
#include <vector>

#include "calrec/calibration.hpp"
#include "calrec/dataset.hpp"
#include "calrec/ranker.hpp"

namespace calrec {

// Distribution of the number of successes among independent Bernoulli
// trials with (possibly different) success probabilities.
struct PoissonBinomialPmf {
  std::vector<double> pmf;  // pmf[c] = P(count = c), c = 0..n
};

// O(n^2) dynamic program, exact up to rounding.
PoissonBinomialPmf pb_pmf(std::span<const double> probs);

// Adds one more trial in place.
void pb_push(std::vector<double>& pmf, double p);

// Distribution of the sum of two independent counts.
std::vector<double> pb_convolve(std::span<const double> a,
                                std::span<const double> b);

enum class UtilityKind { kPrecision, kRecall, kF1, kNdcg };

const char* utility_kind_name(UtilityKind kind);
UtilityKind parse_utility_kind(const std::string& name);

// Expected utilities of a top-k list under independent relevance with the
// given probabilities. `rest` holds the probabilities of the candidates not
// recommended; they matter only through the total number of relevant items.
double expected_precision(std::span<const double> topk);
double expected_recall(std::span<const double> topk, std::span<const double> rest);
double expected_f1(std::span<const double> topk, std::span<const double> rest);
// `topk` in rank order. Zero when nothing is relevant anywhere.
double expected_ndcg(std::span<const double> topk, std::span<const double> rest);

double expected_utility(UtilityKind kind, std::span<const double> topk,
                        std::span<const double> rest);

// Entry k-1 is the expected utility of the top-k prefix of `ranked`, with
// ranked[k..] followed by `rest` as the unrecommended candidates.
std::vector<double> utility_curve(std::span<const double> ranked,
                                  std::span<const double> rest,
                                  UtilityKind kind);

// 1-based index of the first maximum.
std::size_t select_k(std::span<const double> curve);

struct PerkConfig {
  std::size_t k_max = 20;
  UtilityKind utility = UtilityKind::kF1;
  std::size_t rest_pool = 500;

  void validate() const;
};

struct PersonalizedCut {
  UserId user = 0;
  std::size_t k_star = 0;
  std::vector<double> curve;
  std::vector<ItemId> items;
  // Candidates available after excluding train items, capped at
  // k_max + rest_pool. The curve is shorter than k_max exactly when this
  // is smaller than k_max.
  std::size_t candidate_pool = 0;
};

// Ranks the user's non-train items, calibrates the top k_max + rest_pool
// scores, and cuts the list where the expected utility peaks.
PersonalizedCut perk_recommend(const MfParams& params, const Calibrator& cal,
                               const Dataset& dataset, UserId user,
                               const PerkConfig& cfg);

}  // namespace calrec
