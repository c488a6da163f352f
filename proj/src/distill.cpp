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

#include "calrec/distill.hpp"

#include <algorithm>
#include <cmath>

#include "calrec/error.hpp"
#include "calrec/math.hpp"

namespace calrec {

void BdConfig::validate() const {
  if (!(lambda_ts >= 0) || !(lambda_st >= 0)) {
    throw ValidationError("bd.lambda_ts and bd.lambda_st must be >= 0");
  }
  if (sample_size < 1) throw ValidationError("bd.sample_size must be >= 1");
  if (!(eta > 0)) throw ValidationError("bd.eta must be positive");
  if (truncate_rank < 1) throw ValidationError("bd.truncate_rank must be >= 1");
  if (epochs < 0) throw ValidationError("bd.epochs must be >= 0");
}

RankTable build_rank_table(const MfParams& params, const Dataset& dataset) {
  RankTable table;
  table.ranks.assign(dataset.num_users(),
                     std::vector<std::uint32_t>(dataset.num_items(), 0));
  for (UserId u = 0; u < dataset.num_users(); ++u) {
    const auto ranked =
        rank_items(params, u, dataset.user_items(Split::kTrain, u));
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      table.ranks[u][ranked[r]] = static_cast<std::uint32_t>(r + 1);
    }
  }
  return table;
}

std::vector<double> rank_discrepancy_weights(
    std::span<const std::uint32_t> rank_this,
    std::span<const std::uint32_t> rank_other, double eta, int truncate_rank) {
  if (rank_this.size() != rank_other.size()) {
    throw ValidationError("rank rows cover different item counts");
  }
  if (!(eta > 0) || truncate_rank < 1) {
    throw ValidationError("need eta > 0 and truncate_rank >= 1");
  }
  const auto cap = static_cast<std::uint32_t>(truncate_rank);
  std::vector<double> weights(rank_this.size(), 0.0);
  for (std::size_t i = 0; i < rank_this.size(); ++i) {
    if ((rank_this[i] == 0) != (rank_other[i] == 0)) {
      throw ValidationError("rank rows have different candidate sets");
    }
    if (rank_this[i] == 0) continue;
    const auto r_this = std::min(rank_this[i], cap);
    const auto r_other = std::min(rank_other[i], cap);
    if (r_this > r_other) {
      weights[i] = std::tanh(eta * static_cast<double>(r_this - r_other));
    }
  }
  return weights;
}

std::vector<ItemId> sample_distill_items(std::span<const double> weights,
                                         std::size_t n, Rng& rng) {
  std::vector<double> remaining(weights.begin(), weights.end());
  std::size_t positive = 0;
  for (double& w : remaining) {
    if (!(w > 0)) {
      w = 0.0;
    } else {
      ++positive;
    }
  }
  std::vector<ItemId> out;
  if (positive <= n) {
    for (std::size_t i = 0; i < remaining.size(); ++i) {
      if (remaining[i] > 0) out.push_back(static_cast<ItemId>(i));
    }
    return out;
  }
  out.reserve(n);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t draw = 0; draw < n; ++draw) {
    double total = 0.0;
    for (double w : remaining) total += w;
    const double target = unit(rng) * total;
    double cumulative = 0.0;
    std::size_t chosen = remaining.size();
    std::size_t last_positive = remaining.size();
    for (std::size_t i = 0; i < remaining.size(); ++i) {
      if (remaining[i] == 0.0) continue;
      last_positive = i;
      cumulative += remaining[i];
      if (target < cumulative) {
        chosen = i;
        break;
      }
    }
    // Rounding can leave target just above the final cumulative sum.
    if (chosen == remaining.size()) chosen = last_positive;
    out.push_back(static_cast<ItemId>(chosen));
    remaining[chosen] = 0.0;
  }
  return out;
}

namespace {

constexpr double kProbClamp = 1e-7;

void check_cover(std::span<const double> learner, std::span<const double> target,
                 std::span<const ItemId> items) {
  for (ItemId i : items) {
    if (i >= learner.size() || i >= target.size()) {
      throw ValidationError("distillation item " + std::to_string(i) +
                            " missing from probability maps");
    }
  }
}

}  // namespace

double bd_loss(std::span<const double> learner_probs,
               std::span<const double> target_probs,
               std::span<const ItemId> items) {
  if (items.empty()) return 0.0;
  check_cover(learner_probs, target_probs, items);
  double total = 0.0;
  for (ItemId i : items) {
    const double q = std::clamp(learner_probs[i], kProbClamp, 1.0 - kProbClamp);
    const double t = std::clamp(target_probs[i], kProbClamp, 1.0 - kProbClamp);
    total += -(t * std::log(q) + (1.0 - t) * std::log1p(-q));
  }
  return total / static_cast<double>(items.size());
}

std::vector<double> bd_loss_score_gradient(std::span<const double> learner_probs,
                                           std::span<const double> target_probs,
                                           std::span<const ItemId> items) {
  check_cover(learner_probs, target_probs, items);
  std::vector<double> grad;
  grad.reserve(items.size());
  const double inv_n = items.empty() ? 0.0 : 1.0 / static_cast<double>(items.size());
  for (ItemId i : items) {
    const double t = std::clamp(target_probs[i], kProbClamp, 1.0 - kProbClamp);
    grad.push_back((learner_probs[i] - t) * inv_n);
  }
  return grad;
}

double distill_user_loss(const MfParams& params, UserId user,
                         std::span<const ItemId> items,
                         std::span<const double> targets, double lambda) {
  if (targets.size() != items.size()) {
    throw ValidationError("one distillation target per item required");
  }
  if (items.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t k = 0; k < items.size(); ++k) {
    const double s = score(params, user, items[k]);
    const double t = std::clamp(targets[k], kProbClamp, 1.0 - kProbClamp);
    // BCE written on the logit; equals the clamped form away from the clamp.
    total += t * softplus(-s) + (1.0 - t) * softplus(s);
  }
  return lambda * total / static_cast<double>(items.size());
}

DistillGradient distill_user_gradient(const MfParams& params, UserId user,
                                      std::span<const ItemId> items,
                                      std::span<const double> targets,
                                      double lambda) {
  if (targets.size() != items.size()) {
    throw ValidationError("one distillation target per item required");
  }
  DistillGradient grad;
  grad.user = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(params.dim()));
  if (items.empty()) return grad;
  const double scale = lambda / static_cast<double>(items.size());
  const Eigen::VectorXd p = params.user_emb.row(user).transpose();
  for (std::size_t k = 0; k < items.size(); ++k) {
    const double t = std::clamp(targets[k], kProbClamp, 1.0 - kProbClamp);
    const double g = scale * (sigmoid(score(params, user, items[k])) - t);
    grad.user += g * params.item_emb.row(items[k]).transpose();
    grad.items.push_back(g * p);
    grad.biases.push_back(g);
  }
  return grad;
}

CotrainStreams make_cotrain_streams(std::uint64_t global_seed,
                                    std::uint64_t epoch) {
  return {epoch_rng(stream_seed(global_seed, Stream::kTeacherTrain), epoch),
          epoch_rng(stream_seed(global_seed, Stream::kStudentTrain), epoch),
          epoch_rng(stream_seed(global_seed, Stream::kDistillSampling), epoch)};
}

namespace {

struct UserSamples {
  std::vector<std::vector<ItemId>> items;      // per user
  std::vector<std::vector<double>> targets;    // counterpart probabilities
};

UserSamples sample_for_model(const RankTable& own, const RankTable& other,
                             const MfParams& counterpart, const BdConfig& cfg,
                             Rng& rng) {
  UserSamples out;
  const std::size_t users = own.ranks.size();
  out.items.resize(users);
  out.targets.resize(users);
  for (UserId u = 0; u < users; ++u) {
    const auto weights = rank_discrepancy_weights(own.ranks[u], other.ranks[u],
                                                  cfg.eta, cfg.truncate_rank);
    out.items[u] = sample_distill_items(
        weights, static_cast<std::size_t>(cfg.sample_size), rng);
    for (ItemId j : out.items[u]) {
      out.targets[u].push_back(sigmoid(score(counterpart, u, j)));
    }
  }
  return out;
}

ModelEpochReport train_model(MfParams& params, const Dataset& dataset,
                             const TrainConfig& base_cfg, double lambda,
                             const UserSamples& samples, Rng& rng) {
  ModelEpochReport report;
  double distill_total = 0.0;
  std::size_t distill_users = 0;
  for (UserId u = 0; u < samples.items.size(); ++u) {
    const auto& items = samples.items[u];
    report.sampled_total += items.size();
    report.max_sampled_per_user = std::max(report.max_sampled_per_user, items.size());
    if (items.empty()) {
      ++report.empty_sample_users;
      continue;
    }
    // Measured before this epoch's updates, like the base loss.
    distill_total += distill_user_loss(params, u, items, samples.targets[u], 1.0);
    ++distill_users;
  }
  report.distill_loss =
      distill_users == 0 ? 0.0 : distill_total / static_cast<double>(distill_users);

  // Each positive of user u is an SGD step on
  // pointwise(u, .) + lambda * bd_loss(u), so the distillation term enters
  // once per positive, right after that positive's base update.
  PositiveHook distill_step;
  if (lambda != 0.0) {
    distill_step = [&](MfParams& p, UserId u) {
      const auto& items = samples.items[u];
      if (items.empty()) return;
      const auto grad =
          distill_user_gradient(p, u, items, samples.targets[u], lambda);
      p.user_emb.row(u) -= base_cfg.lr * grad.user.transpose();
      for (std::size_t k = 0; k < items.size(); ++k) {
        p.item_emb.row(items[k]) -= base_cfg.lr * grad.items[k].transpose();
        p.item_bias[items[k]] -= base_cfg.lr * grad.biases[k];
      }
    };
  }
  report.base_loss =
      pointwise_epoch(params, dataset, base_cfg, rng, distill_step).mean_loss;
  return report;
}

}  // namespace

CotrainReport cotrain_epoch(MfParams& teacher, MfParams& student,
                            const Dataset& dataset, const TrainConfig& base_cfg,
                            const BdConfig& bd_cfg, CotrainStreams& streams) {
  bd_cfg.validate();
  if (base_cfg.loss_kind != LossKind::kPointwise) {
    throw ValidationError("co-training requires the pointwise base loss");
  }
  const MfParams teacher_prev = teacher;
  const MfParams student_prev = student;
  const RankTable teacher_ranks = build_rank_table(teacher_prev, dataset);
  const RankTable student_ranks = build_rank_table(student_prev, dataset);

  const UserSamples teacher_samples = sample_for_model(
      teacher_ranks, student_ranks, student_prev, bd_cfg, streams.sampling);
  const UserSamples student_samples = sample_for_model(
      student_ranks, teacher_ranks, teacher_prev, bd_cfg, streams.sampling);

  CotrainReport report;
  report.teacher = train_model(teacher, dataset, base_cfg, bd_cfg.lambda_ts,
                               teacher_samples, streams.teacher);
  report.student = train_model(student, dataset, base_cfg, bd_cfg.lambda_st,
                               student_samples, streams.student);
  return report;
}

}  // namespace calrec
