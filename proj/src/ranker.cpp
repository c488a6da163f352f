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

#include "calrec/ranker.hpp"

#include <algorithm>
#include <numeric>

#include "calrec/error.hpp"
#include "calrec/math.hpp"

namespace calrec {

bool MfParams::all_finite() const {
  return user_emb.allFinite() && item_emb.allFinite() && item_bias.allFinite();
}

bool operator==(const MfParams& a, const MfParams& b) {
  return a.user_emb.rows() == b.user_emb.rows() &&
         a.user_emb.cols() == b.user_emb.cols() &&
         a.item_emb.rows() == b.item_emb.rows() &&
         a.item_emb.cols() == b.item_emb.cols() &&
         a.item_bias.size() == b.item_bias.size() &&
         a.user_emb == b.user_emb && a.item_emb == b.item_emb &&
         a.item_bias == b.item_bias;
}

const char* loss_kind_name(LossKind kind) {
  return kind == LossKind::kBpr ? "bpr" : "pointwise";
}

LossKind parse_loss_kind(const std::string& name) {
  if (name == "bpr") return LossKind::kBpr;
  if (name == "pointwise") return LossKind::kPointwise;
  throw ValidationError("unknown loss kind: " + name);
}

void TrainConfig::validate() const {
  if (!(lr > 0)) throw ValidationError("train.lr must be positive");
  if (!(reg >= 0)) throw ValidationError("train.reg must be nonnegative");
  if (epochs < 0) throw ValidationError("train.epochs must be nonnegative");
  if (batch_size < 1) throw ValidationError("train.batch_size must be >= 1");
  if (negatives_per_positive < 0) {
    throw ValidationError("train.negatives_per_positive must be >= 0");
  }
}

MfParams init_params(std::size_t num_users, std::size_t num_items,
                     std::size_t dim, std::uint64_t seed) {
  if (num_users == 0 || num_items == 0) {
    throw ValidationError("init_params: need at least one user and one item");
  }
  if (dim == 0) throw ValidationError("init_params: dim must be >= 1");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 0.01);
  MfParams params;
  params.user_emb.resize(num_users, dim);
  params.item_emb.resize(num_items, dim);
  params.item_bias = Eigen::VectorXd::Zero(num_items);
  for (Eigen::Index r = 0; r < params.user_emb.rows(); ++r) {
    for (Eigen::Index c = 0; c < params.user_emb.cols(); ++c) {
      params.user_emb(r, c) = normal(rng);
    }
  }
  for (Eigen::Index r = 0; r < params.item_emb.rows(); ++r) {
    for (Eigen::Index c = 0; c < params.item_emb.cols(); ++c) {
      params.item_emb(r, c) = normal(rng);
    }
  }
  return params;
}

namespace {

void check_indices(const MfParams& params, UserId user, ItemId item) {
  if (user >= params.num_users()) {
    throw ValidationError("user index out of range: " + std::to_string(user));
  }
  if (item >= params.num_items()) {
    throw ValidationError("item index out of range: " + std::to_string(item));
  }
}

double raw_score(const MfParams& params, UserId user, ItemId item) {
  return params.user_emb.row(user).dot(params.item_emb.row(item)) +
         params.item_bias[item];
}

}  // namespace

double score(const MfParams& params, UserId user, ItemId item) {
  check_indices(params, user, item);
  return raw_score(params, user, item);
}

double bpr_loss(const MfParams& params, UserId user, ItemId pos, ItemId neg,
                double reg) {
  const double diff = score(params, user, pos) - score(params, user, neg);
  return softplus(-diff) +
         reg * (params.user_emb.row(user).squaredNorm() +
                params.item_emb.row(pos).squaredNorm() +
                params.item_emb.row(neg).squaredNorm());
}

PairGradient bpr_gradient(const MfParams& params, UserId user, ItemId pos,
                          ItemId neg, double reg) {
  const double diff = score(params, user, pos) - score(params, user, neg);
  // d/d(diff) of -ln sigma(diff)
  const double g = -sigmoid(-diff);
  auto p = params.user_emb.row(user).transpose();
  auto qi = params.item_emb.row(pos).transpose();
  auto qj = params.item_emb.row(neg).transpose();
  PairGradient grad;
  grad.user = g * (qi - qj) + 2.0 * reg * p;
  grad.pos_item = g * p + 2.0 * reg * qi;
  grad.neg_item = -g * p + 2.0 * reg * qj;
  grad.pos_bias = g;
  grad.neg_bias = -g;
  return grad;
}

double pointwise_loss(const MfParams& params, UserId user, ItemId item,
                      double label, double reg) {
  const double s = score(params, user, item);
  return label * softplus(-s) + (1.0 - label) * softplus(s) +
         reg * (params.user_emb.row(user).squaredNorm() +
                params.item_emb.row(item).squaredNorm());
}

PointGradient pointwise_gradient(const MfParams& params, UserId user,
                                 ItemId item, double label, double reg) {
  const double g = sigmoid(score(params, user, item)) - label;
  PointGradient grad;
  grad.user = g * params.item_emb.row(item).transpose() +
              2.0 * reg * params.user_emb.row(user).transpose();
  grad.item = g * params.user_emb.row(user).transpose() +
              2.0 * reg * params.item_emb.row(item).transpose();
  grad.bias = g;
  return grad;
}

void apply_gradient(MfParams& params, UserId user, ItemId pos, ItemId neg,
                    const PairGradient& grad, double lr) {
  params.user_emb.row(user) -= lr * grad.user.transpose();
  params.item_emb.row(pos) -= lr * grad.pos_item.transpose();
  params.item_bias[pos] -= lr * grad.pos_bias;
  params.item_emb.row(neg) -= lr * grad.neg_item.transpose();
  params.item_bias[neg] -= lr * grad.neg_bias;
}

void apply_gradient(MfParams& params, UserId user, ItemId item,
                    const PointGradient& grad, double lr) {
  params.user_emb.row(user) -= lr * grad.user.transpose();
  params.item_emb.row(item) -= lr * grad.item.transpose();
  params.item_bias[item] -= lr * grad.bias;
}

namespace {

void check_shapes(const MfParams& params, const Dataset& dataset) {
  if (params.num_users() != dataset.num_users() ||
      params.num_items() != dataset.num_items() ||
      params.item_bias.size() != params.item_emb.rows() ||
      params.user_emb.cols() != params.item_emb.cols()) {
    throw ValidationError("parameter shapes do not match the dataset");
  }
}

std::vector<std::size_t> shuffled_positions(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace

EpochStats bpr_epoch(MfParams& params, const Dataset& dataset,
                     const TrainConfig& cfg, Rng& rng) {
  if (cfg.loss_kind != LossKind::kBpr) {
    throw ValidationError("bpr_epoch requires loss_kind = bpr");
  }
  check_shapes(params, dataset);
  const auto& train = dataset.train();
  const auto order = shuffled_positions(train.size(), rng);
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);

  struct Triple {
    UserId u;
    ItemId i, j;
    PairGradient grad;
  };
  std::vector<Triple> pending;
  double total = 0.0;
  for (std::size_t start = 0; start < order.size(); start += batch) {
    const std::size_t end = std::min(order.size(), start + batch);
    pending.clear();
    for (std::size_t k = start; k < end; ++k) {
      const auto& x = train[order[k]];
      const ItemId neg = sample_negative(dataset, x.user, rng);
      total += bpr_loss(params, x.user, x.item, neg, cfg.reg);
      pending.push_back(
          {x.user, x.item, neg, bpr_gradient(params, x.user, x.item, neg, cfg.reg)});
    }
    for (const auto& t : pending) apply_gradient(params, t.u, t.i, t.j, t.grad, cfg.lr);
  }
  return {order.empty() ? 0.0 : total / static_cast<double>(order.size()),
          order.size()};
}

EpochStats pointwise_epoch(MfParams& params, const Dataset& dataset,
                           const TrainConfig& cfg, Rng& rng,
                           const PositiveHook& after_positive) {
  if (cfg.loss_kind != LossKind::kPointwise) {
    throw ValidationError("pointwise_epoch requires loss_kind = pointwise");
  }
  check_shapes(params, dataset);
  const auto& train = dataset.train();
  const auto order = shuffled_positions(train.size(), rng);

  struct Example {
    UserId u;
    ItemId i;
    double label;
  };
  // Expand the epoch into examples first so mini-batches may straddle
  // positives.
  std::vector<Example> examples;
  examples.reserve(order.size() * (1 + cfg.negatives_per_positive));
  for (std::size_t k : order) {
    const auto& x = train[k];
    examples.push_back({x.user, x.item, 1.0});
    for (int n = 0; n < cfg.negatives_per_positive; ++n) {
      examples.push_back({x.user, sample_negative(dataset, x.user, rng), 0.0});
    }
  }

  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  std::vector<PointGradient> grads;
  double total = 0.0;
  for (std::size_t start = 0; start < examples.size(); start += batch) {
    const std::size_t end = std::min(examples.size(), start + batch);
    grads.clear();
    for (std::size_t k = start; k < end; ++k) {
      const auto& e = examples[k];
      total += pointwise_loss(params, e.u, e.i, e.label, cfg.reg);
      grads.push_back(pointwise_gradient(params, e.u, e.i, e.label, cfg.reg));
    }
    for (std::size_t k = start; k < end; ++k) {
      apply_gradient(params, examples[k].u, examples[k].i, grads[k - start],
                     cfg.lr);
    }
    if (after_positive) {
      for (std::size_t k = start; k < end; ++k) {
        if (examples[k].label == 1.0) after_positive(params, examples[k].u);
      }
    }
  }
  return {examples.empty() ? 0.0 : total / static_cast<double>(examples.size()),
          examples.size()};
}

EpochStats train_epoch(MfParams& params, const Dataset& dataset,
                       const TrainConfig& cfg, Rng& rng) {
  return cfg.loss_kind == LossKind::kBpr
             ? bpr_epoch(params, dataset, cfg, rng)
             : pointwise_epoch(params, dataset, cfg, rng);
}

namespace {

std::vector<std::pair<double, ItemId>> scored_candidates(
    const MfParams& params, UserId user, std::span<const ItemId> exclude) {
  if (user >= params.num_users()) {
    throw ValidationError("user index out of range: " + std::to_string(user));
  }
  for (ItemId i : exclude) {
    if (i >= params.num_items()) {
      throw ValidationError("excluded item out of range: " + std::to_string(i));
    }
  }
  const Eigen::VectorXd scores =
      params.item_emb * params.user_emb.row(user).transpose() + params.item_bias;
  std::vector<std::pair<double, ItemId>> out;
  out.reserve(params.num_items());
  auto ex = exclude.begin();
  for (ItemId i = 0; i < params.num_items(); ++i) {
    while (ex != exclude.end() && *ex < i) ++ex;
    if (ex != exclude.end() && *ex == i) continue;
    out.emplace_back(scores[i], i);
  }
  return out;
}

bool ranks_before(const std::pair<double, ItemId>& a,
                  const std::pair<double, ItemId>& b) {
  if (a.first != b.first) return a.first > b.first;
  return a.second < b.second;
}

}  // namespace

std::vector<ItemId> rank_items(const MfParams& params, UserId user,
                               std::span<const ItemId> exclude) {
  return top_items(params, user, exclude, params.num_items());
}

std::vector<ItemId> top_items(const MfParams& params, UserId user,
                              std::span<const ItemId> exclude, std::size_t n) {
  auto candidates = scored_candidates(params, user, exclude);
  n = std::min(n, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + n,
                    candidates.end(), ranks_before);
  std::vector<ItemId> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = candidates[k].second;
  return out;
}

double auc(const MfParams& params, const Dataset& dataset, Split split,
           Rng& rng, std::size_t pairs_per_user) {
  check_shapes(params, dataset);
  if (pairs_per_user == 0) throw ValidationError("pairs_per_user must be >= 1");
  double sum = 0.0;
  std::size_t users = 0;
  for (UserId u = 0; u < dataset.num_users(); ++u) {
    auto positives = dataset.user_items(split, u);
    if (positives.empty()) continue;
    std::span<const ItemId> excluded[] = {dataset.user_items(Split::kTrain, u),
                                          positives};
    if (split == Split::kTrain) {
      excluded[1] = {};
    }
    std::uniform_int_distribution<std::size_t> pick(0, positives.size() - 1);
    double hits = 0.0;
    for (std::size_t n = 0; n < pairs_per_user; ++n) {
      const ItemId pos = positives[pick(rng)];
      const ItemId neg = sample_excluding(dataset.num_items(), excluded, rng);
      const double sp = raw_score(params, u, pos);
      const double sn = raw_score(params, u, neg);
      hits += sp > sn ? 1.0 : (sp == sn ? 0.5 : 0.0);
    }
    sum += hits / static_cast<double>(pairs_per_user);
    ++users;
  }
  if (users == 0) {
    throw ValidationError(std::string("split '") + split_name(split) +
                          "' is empty for every user");
  }
  return sum / static_cast<double>(users);
}

}  // namespace calrec
