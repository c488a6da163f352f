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

#include "calrec/perk.hpp"

#include <algorithm>
#include <cmath>

#include "calrec/error.hpp"

namespace calrec {

namespace {

void check_probs(std::span<const double> probs) {
  for (double p : probs) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw ValidationError("probability outside [0, 1]: " + std::to_string(p));
    }
  }
}

double gain(std::size_t position) {  // 1-based
  return 1.0 / std::log2(static_cast<double>(position) + 1.0);
}

// inv_idcg[r] = 1 / sum_{j=1..r} gain(j), r >= 1.
std::vector<double> inverse_idcg_table(std::size_t max_rank) {
  std::vector<double> table(max_rank + 1, 0.0);
  double idcg = 0.0;
  for (std::size_t r = 1; r <= max_rank; ++r) {
    idcg += gain(r);
    table[r] = 1.0 / idcg;
  }
  return table;
}

// sum_{a,b} P(A=a) P(B=b) f(a, b)
template <typename F>
double expect_pair(std::span<const double> pa, std::span<const double> pb, F f) {
  double total = 0.0;
  for (std::size_t a = 1; a < pa.size(); ++a) {
    if (pa[a] == 0.0) continue;
    double inner = 0.0;
    for (std::size_t b = 0; b < pb.size(); ++b) inner += pb[b] * f(a, b);
    total += pa[a] * inner;
  }
  return total;
}

double recall_term(std::size_t a, std::size_t b) {
  return static_cast<double>(a) / static_cast<double>(a + b);
}

// NDCG contribution of position i (0-based) in a top-k list, given the
// distribution of relevant items among all other candidates.
double ndcg_position_term(double p_i, std::size_t i, std::size_t k,
                          std::span<const double> others,
                          std::span<const double> inv_idcg) {
  if (p_i == 0.0) return 0.0;
  double inner = 0.0;
  for (std::size_t m = 0; m < others.size(); ++m) {
    inner += others[m] * inv_idcg[std::min(m + 1, k)];
  }
  return p_i * gain(i + 1) * inner;
}

}  // namespace

void pb_push(std::vector<double>& pmf, double p) {
  pmf.push_back(0.0);
  for (std::size_t c = pmf.size() - 1; c > 0; --c) {
    pmf[c] = pmf[c] * (1.0 - p) + pmf[c - 1] * p;
  }
  pmf[0] *= 1.0 - p;
}

PoissonBinomialPmf pb_pmf(std::span<const double> probs) {
  check_probs(probs);
  PoissonBinomialPmf out;
  out.pmf.reserve(probs.size() + 1);
  out.pmf.push_back(1.0);
  for (double p : probs) pb_push(out.pmf, p);
  return out;
}

std::vector<double> pb_convolve(std::span<const double> a,
                                std::span<const double> b) {
  if (a.empty() || b.empty()) return {};
  std::vector<double> out(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == 0.0) continue;
    for (std::size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  }
  return out;
}

const char* utility_kind_name(UtilityKind kind) {
  switch (kind) {
    case UtilityKind::kPrecision:
      return "precision";
    case UtilityKind::kRecall:
      return "recall";
    case UtilityKind::kF1:
      return "f1";
    case UtilityKind::kNdcg:
      return "ndcg";
  }
  return "?";
}

UtilityKind parse_utility_kind(const std::string& name) {
  if (name == "precision") return UtilityKind::kPrecision;
  if (name == "recall") return UtilityKind::kRecall;
  if (name == "f1") return UtilityKind::kF1;
  if (name == "ndcg") return UtilityKind::kNdcg;
  throw ValidationError("unknown utility kind: " + name);
}

double expected_precision(std::span<const double> topk) {
  if (topk.empty()) throw ValidationError("expected_precision needs k >= 1");
  check_probs(topk);
  double sum = 0.0;
  for (double p : topk) sum += p;
  return sum / static_cast<double>(topk.size());
}

double expected_recall(std::span<const double> topk,
                       std::span<const double> rest) {
  const auto a = pb_pmf(topk);
  const auto b = pb_pmf(rest);
  return expect_pair(a.pmf, b.pmf, recall_term);
}

double expected_f1(std::span<const double> topk, std::span<const double> rest) {
  if (topk.empty()) throw ValidationError("expected_f1 needs k >= 1");
  const auto a = pb_pmf(topk);
  const auto b = pb_pmf(rest);
  const auto k = topk.size();
  return expect_pair(a.pmf, b.pmf, [k](std::size_t a, std::size_t b) {
    return 2.0 * static_cast<double>(a) / static_cast<double>(k + a + b);
  });
}

double expected_ndcg(std::span<const double> topk,
                     std::span<const double> rest) {
  if (topk.empty()) throw ValidationError("expected_ndcg needs k >= 1");
  check_probs(topk);
  check_probs(rest);
  const std::size_t k = topk.size();
  const auto inv_idcg = inverse_idcg_table(k);
  std::vector<double> others;
  others.reserve(k + rest.size());
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    // Relevant count among every candidate except position i, recomputed
    // from scratch rather than deconvolved.
    others.clear();
    for (std::size_t j = 0; j < k; ++j) {
      if (j != i) others.push_back(topk[j]);
    }
    others.insert(others.end(), rest.begin(), rest.end());
    const auto dist = pb_pmf(others);
    total += ndcg_position_term(topk[i], i, k, dist.pmf, inv_idcg);
  }
  return total;
}

double expected_utility(UtilityKind kind, std::span<const double> topk,
                        std::span<const double> rest) {
  switch (kind) {
    case UtilityKind::kPrecision:
      return expected_precision(topk);
    case UtilityKind::kRecall:
      return expected_recall(topk, rest);
    case UtilityKind::kF1:
      return expected_f1(topk, rest);
    case UtilityKind::kNdcg:
      return expected_ndcg(topk, rest);
  }
  return 0.0;
}

std::vector<double> utility_curve(std::span<const double> ranked,
                                  std::span<const double> rest,
                                  UtilityKind kind) {
  const std::size_t k_max = ranked.size();
  if (k_max == 0) throw ValidationError("utility_curve needs k_max >= 1");
  check_probs(ranked);
  check_probs(rest);
  std::vector<double> curve(k_max, 0.0);

  if (kind == UtilityKind::kPrecision) {
    double sum = 0.0;
    for (std::size_t k = 1; k <= k_max; ++k) {
      sum += ranked[k - 1];
      curve[k - 1] = sum / static_cast<double>(k);
    }
    return curve;
  }

  // Candidates in rank order: ranked followed by rest.
  std::vector<double> all(ranked.begin(), ranked.end());
  all.insert(all.end(), rest.begin(), rest.end());
  const std::size_t n = all.size();

  // prefix[k]: relevant count among all[0..k); suffix[k]: among all[k..n).
  std::vector<std::vector<double>> prefix(k_max + 1);
  prefix[0] = {1.0};
  for (std::size_t k = 1; k <= k_max; ++k) {
    prefix[k] = prefix[k - 1];
    pb_push(prefix[k], all[k - 1]);
  }
  std::vector<std::vector<double>> suffix(k_max + 1);
  std::vector<double> running{1.0};
  for (std::size_t j = n; j-- > 0;) {
    pb_push(running, all[j]);
    if (j <= k_max) suffix[j] = running;
  }
  if (n == k_max) suffix[k_max] = {1.0};

  if (kind == UtilityKind::kRecall || kind == UtilityKind::kF1) {
    for (std::size_t k = 1; k <= k_max; ++k) {
      if (kind == UtilityKind::kRecall) {
        curve[k - 1] = expect_pair(prefix[k], suffix[k], recall_term);
      } else {
        curve[k - 1] = expect_pair(prefix[k], suffix[k],
                                   [k](std::size_t a, std::size_t b) {
                                     return 2.0 * static_cast<double>(a) /
                                            static_cast<double>(k + a + b);
                                   });
      }
    }
    return curve;
  }

  // NDCG. The count among all candidates but position i does not depend on
  // the cutoff, so each is built once as prefix[i] * suffix[i + 1].
  const auto inv_idcg = inverse_idcg_table(k_max);
  std::vector<std::vector<double>> excluding(k_max);
  for (std::size_t i = 0; i < k_max; ++i) {
    excluding[i] = pb_convolve(prefix[i], suffix[i + 1]);
  }
  for (std::size_t k = 1; k <= k_max; ++k) {
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      total += ndcg_position_term(ranked[i], i, k, excluding[i], inv_idcg);
    }
    curve[k - 1] = total;
  }
  return curve;
}

std::size_t select_k(std::span<const double> curve) {
  if (curve.empty()) throw ValidationError("select_k needs a non-empty curve");
  std::size_t best = 0;
  for (std::size_t k = 1; k < curve.size(); ++k) {
    if (curve[k] > curve[best]) best = k;
  }
  return best + 1;
}

void PerkConfig::validate() const {
  if (k_max < 1) throw ValidationError("perk.k_max must be >= 1");
}

PersonalizedCut perk_recommend(const MfParams& params, const Calibrator& cal,
                               const Dataset& dataset, UserId user,
                               const PerkConfig& cfg) {
  cfg.validate();
  const auto candidates =
      top_items(params, user, dataset.user_items(Split::kTrain, user),
                cfg.k_max + cfg.rest_pool);
  if (candidates.empty()) {
    throw ValidationError("user " + std::to_string(user) +
                          " has no candidate items");
  }
  std::vector<double> probs;
  probs.reserve(candidates.size());
  for (ItemId i : candidates) {
    probs.push_back(calibrate_score(cal, score(params, user, i)));
  }
  const std::size_t k_max = std::min(cfg.k_max, candidates.size());
  const std::span<const double> all(probs);

  PersonalizedCut cut;
  cut.user = user;
  cut.candidate_pool = candidates.size();
  cut.curve = utility_curve(all.first(k_max), all.subspan(k_max), cfg.utility);
  cut.k_star = select_k(cut.curve);
  cut.items.assign(candidates.begin(),
                   candidates.begin() + static_cast<std::ptrdiff_t>(cut.k_star));
  return cut;
}

}  // namespace calrec
