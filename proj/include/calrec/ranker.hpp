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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "calrec/dataset.hpp"
#include "calrec/random.hpp"

namespace calrec {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Matrix-factorization scorer: s(u,i) = <p_u, q_i> + b_i.
struct MfParams {
  RowMatrix user_emb;          // num_users x dim
  RowMatrix item_emb;          // num_items x dim
  Eigen::VectorXd item_bias;   // num_items

  std::size_t num_users() const { return user_emb.rows(); }
  std::size_t num_items() const { return item_emb.rows(); }
  std::size_t dim() const { return user_emb.cols(); }
  bool all_finite() const;

  friend bool operator==(const MfParams& a, const MfParams& b);
};

enum class LossKind { kBpr, kPointwise };

const char* loss_kind_name(LossKind kind);
LossKind parse_loss_kind(const std::string& name);

struct TrainConfig {
  double lr = 0.05;
  double reg = 1e-4;
  int epochs = 20;
  int batch_size = 1;
  LossKind loss_kind = LossKind::kBpr;
  int negatives_per_positive = 4;
  std::uint64_t seed = 0;

  void validate() const;
};

// N(0, 0.01^2) embeddings and zero biases.
MfParams init_params(std::size_t num_users, std::size_t num_items,
                     std::size_t dim, std::uint64_t seed);

double score(const MfParams& params, UserId user, ItemId item);

// Gradient of one BPR triple with respect to the touched parameters.
struct PairGradient {
  Eigen::VectorXd user;
  Eigen::VectorXd pos_item;
  Eigen::VectorXd neg_item;
  double pos_bias = 0.0;
  double neg_bias = 0.0;
};

// Gradient of one pointwise example.
struct PointGradient {
  Eigen::VectorXd user;
  Eigen::VectorXd item;
  double bias = 0.0;
};

// -ln sigma(s_ui - s_uj) + reg * (|p_u|^2 + |q_i|^2 + |q_j|^2)
double bpr_loss(const MfParams& params, UserId user, ItemId pos, ItemId neg,
                double reg);
PairGradient bpr_gradient(const MfParams& params, UserId user, ItemId pos,
                          ItemId neg, double reg);

// Binary cross-entropy of sigma(s_ui) against `label` plus
// reg * (|p_u|^2 + |q_i|^2).
double pointwise_loss(const MfParams& params, UserId user, ItemId item,
                      double label, double reg);
PointGradient pointwise_gradient(const MfParams& params, UserId user,
                                 ItemId item, double label, double reg);

void apply_gradient(MfParams& params, UserId user, ItemId pos, ItemId neg,
                    const PairGradient& grad, double lr);
void apply_gradient(MfParams& params, UserId user, ItemId item,
                    const PointGradient& grad, double lr);

struct EpochStats {
  double mean_loss = 0.0;
  std::size_t examples = 0;
};

// One SGD pass over the shuffled train positives. Losses are measured
// before each update. Within a mini-batch all gradients are taken at the
// batch-start parameters.
EpochStats bpr_epoch(MfParams& params, const Dataset& dataset,
                     const TrainConfig& cfg, Rng& rng);
// Called after the update that consumed each positive example; lets callers
// add per-user terms to the objective without touching the sampling stream.
using PositiveHook = std::function<void(MfParams&, UserId)>;

EpochStats pointwise_epoch(MfParams& params, const Dataset& dataset,
                           const TrainConfig& cfg, Rng& rng,
                           const PositiveHook& after_positive = {});
// Dispatches on cfg.loss_kind.
EpochStats train_epoch(MfParams& params, const Dataset& dataset,
                       const TrainConfig& cfg, Rng& rng);

// Items not in `exclude` (sorted), by descending score; ties go to the
// smaller item index.
std::vector<ItemId> rank_items(const MfParams& params, UserId user,
                               std::span<const ItemId> exclude);
// First `n` entries of rank_items, computed with a partial sort.
std::vector<ItemId> top_items(const MfParams& params, UserId user,
                              std::span<const ItemId> exclude, std::size_t n);

// Monte Carlo AUC over users with items in `split`. Negatives are drawn from
// items outside the user's train and `split` sets; ties count one half.
double auc(const MfParams& params, const Dataset& dataset, Split split,
           Rng& rng, std::size_t pairs_per_user);

}  // namespace calrec
