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

#include <cstdint>
#include <span>
#include <vector>

#include "calrec/dataset.hpp"
#include "calrec/random.hpp"
#include "calrec/ranker.hpp"

namespace calrec {

struct BdConfig {
  double lambda_ts = 0.5;  // teacher learning from the student
  double lambda_st = 0.5;  // student learning from the teacher
  int sample_size = 10;
  double eta = 0.1;
  int truncate_rank = 100;
  int epochs = 20;
  std::uint64_t seed = 0;

  void validate() const;
};

// ranks[u][i] is the 1-based rank of item i among the user's non-train
// items, or 0 when i is a train item. Ties go to the smaller item index.
struct RankTable {
  std::vector<std::vector<std::uint32_t>> ranks;
};

RankTable build_rank_table(const MfParams& params, const Dataset& dataset);

// w_i = tanh(eta * max(0, min(r_this, T) - min(r_other, T))): positive
// exactly where the other model ranks i strictly better after truncation.
std::vector<double> rank_discrepancy_weights(
    std::span<const std::uint32_t> rank_this,
    std::span<const std::uint32_t> rank_other, double eta, int truncate_rank);

// Up to n distinct items drawn sequentially with probability proportional
// to weight among those not yet drawn. Returns every positive-weight item
// when fewer than n exist.
std::vector<ItemId> sample_distill_items(std::span<const double> weights,
                                         std::size_t n, Rng& rng);

// Mean binary cross-entropy of learner probabilities against target
// probabilities over `items`; probabilities clamped to [1e-7, 1 - 1e-7].
// Returns 0 for an empty item list.
double bd_loss(std::span<const double> learner_probs,
               std::span<const double> target_probs,
               std::span<const ItemId> items);

// d bd_loss / d s_j for each sampled item j, where q_j = sigma(s_j).
std::vector<double> bd_loss_score_gradient(std::span<const double> learner_probs,
                                           std::span<const double> target_probs,
                                           std::span<const ItemId> items);

// lambda * bd_loss of one user's sampled items as a function of the MF
// parameters, with fixed targets (one per item).
double distill_user_loss(const MfParams& params, UserId user,
                         std::span<const ItemId> items,
                         std::span<const double> targets, double lambda);

struct DistillGradient {
  Eigen::VectorXd user;
  std::vector<Eigen::VectorXd> items;
  std::vector<double> biases;
};

DistillGradient distill_user_gradient(const MfParams& params, UserId user,
                                      std::span<const ItemId> items,
                                      std::span<const double> targets,
                                      double lambda);

struct CotrainStreams {
  Rng teacher;   // base-loss pass of the teacher
  Rng student;   // base-loss pass of the student
  Rng sampling;  // distillation item sampling
};

CotrainStreams make_cotrain_streams(std::uint64_t global_seed,
                                    std::uint64_t epoch);

struct ModelEpochReport {
  double base_loss = 0.0;
  double distill_loss = 0.0;
  std::size_t sampled_total = 0;
  std::size_t max_sampled_per_user = 0;
  std::size_t empty_sample_users = 0;
};

struct CotrainReport {
  ModelEpochReport teacher;
  ModelEpochReport student;
};

// One epoch of bidirectional distillation. Both models are first ranked
// (no randomness) and their distillation items sampled from
// streams.sampling; targets come from the counterpart's parameters at the
// start of the epoch. Each model then runs a pointwise pass on its own
// stream; after the update for each positive of user u it also takes a step
// on lambda * bd_loss(u). With a zero lambda a model's distillation updates
// are skipped entirely.
CotrainReport cotrain_epoch(MfParams& teacher, MfParams& student,
                            const Dataset& dataset, const TrainConfig& base_cfg,
                            const BdConfig& bd_cfg, CotrainStreams& streams);

}  // namespace calrec
