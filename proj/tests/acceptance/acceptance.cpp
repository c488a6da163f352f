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

// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "calrec/calibration.hpp"
#include "calrec/cli.hpp"
#include "calrec/distill.hpp"
#include "calrec/math.hpp"
#include "calrec/perk.hpp"
#include "calrec/ranker.hpp"
#include "calrec/serialization.hpp"
#include "calrec/synthetic.hpp"
#include "oracles.hpp"
#include "scratch_dir.hpp"

using namespace calrec;
namespace oracle = calrec::testing;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

MfParams random_params(std::size_t users, std::size_t items, std::size_t dim,
                       Rng& rng) {
  std::normal_distribution<double> normal(0.0, 0.5);
  auto draw = [&](double) { return normal(rng); };
  MfParams p = init_params(users, items, dim, 0);
  p.user_emb = p.user_emb.unaryExpr(draw);
  p.item_emb = p.item_emb.unaryExpr(draw);
  p.item_bias = p.item_bias.unaryExpr(draw);
  return p;
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
  Outcome o;
  Rng rng(101);
  MfParams p = random_params(5, 9, 6, rng);
  const double reg = 0.01;
  std::uniform_int_distribution<int> col(0, 5);
  double worst = 0.0;
  auto check = [&](double analytic, double numeric) {
    worst = std::max(worst, oracle::relative_error(analytic, numeric));
  };

  // BPR: 12 coordinates spread over user, positive, negative and biases.
  for (int n = 0; n < 12; ++n) {
    const UserId u = rng() % 5;
    const ItemId pos = rng() % 9;
    const ItemId neg = (pos + 1 + rng() % 8) % 9;
    const PairGradient g = bpr_gradient(p, u, pos, neg, reg);
    auto loss = [&] { return bpr_loss(p, u, pos, neg, reg); };
    const int c = col(rng);
    switch (n % 5) {
      case 0: check(g.user[c], oracle::central_difference(loss, p.user_emb(u, c))); break;
      case 1: check(g.pos_item[c], oracle::central_difference(loss, p.item_emb(pos, c))); break;
      case 2: check(g.neg_item[c], oracle::central_difference(loss, p.item_emb(neg, c))); break;
      case 3: check(g.pos_bias, oracle::central_difference(loss, p.item_bias[pos])); break;
      default: check(g.neg_bias, oracle::central_difference(loss, p.item_bias[neg])); break;
    }
  }
  // Pointwise: 12 coordinates, both labels.
  for (int n = 0; n < 12; ++n) {
    const UserId u = rng() % 5;
    const ItemId i = rng() % 9;
    const double label = n % 2;
    const PointGradient g = pointwise_gradient(p, u, i, label, reg);
    auto loss = [&] { return pointwise_loss(p, u, i, label, reg); };
    const int c = col(rng);
    switch (n % 3) {
      case 0: check(g.user[c], oracle::central_difference(loss, p.user_emb(u, c))); break;
      case 1: check(g.item[c], oracle::central_difference(loss, p.item_emb(i, c))); break;
      default: check(g.bias, oracle::central_difference(loss, p.item_bias[i])); break;
    }
  }
  // bd_loss with respect to learner scores: 12 coordinates.
  std::normal_distribution<double> normal(0.0, 1.5);
  std::uniform_real_distribution<double> unit(0.01, 0.99);
  std::vector<double> scores(12);
  std::vector<double> targets(12);
  for (auto& s : scores) s = normal(rng);
  for (auto& t : targets) t = unit(rng);
  std::vector<ItemId> items(12);
  for (ItemId i = 0; i < 12; ++i) items[i] = i;
  auto probs = [&] {
    std::vector<double> q;
    for (double s : scores) q.push_back(sigmoid(s));
    return q;
  };
  const auto g = bd_loss_score_gradient(probs(), targets, items);
  for (std::size_t k = 0; k < items.size(); ++k) {
    check(g[k], oracle::central_difference([&] { return bd_loss(probs(), targets, items); },
                                           scores[k]));
  }
  o.require(worst < 1e-5, "max relative error " + fmt(worst));
  if (o.pass) o.detail = "36 coordinates, max relative error " + fmt(worst);
  return o;
}

Outcome poisson_binomial_exactness() {
  Outcome o;
  Rng rng(202);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> probs(rng() % 13);
    for (auto& p : probs) p = unit(rng);
    const auto pmf = pb_pmf(probs).pmf;
    const auto brute = oracle::brute_force_pmf(probs);
    if (pmf.size() != brute.size()) {
      o.require(false, "length mismatch");
      continue;
    }
    for (std::size_t c = 0; c < pmf.size(); ++c) {
      worst = std::max(worst, std::abs(pmf[c] - brute[c]));
    }
  }
  o.require(worst <= 1e-12, "max abs error " + fmt(worst));
  if (o.pass) o.detail = "200 instances, max abs error " + fmt(worst);
  return o;
}

Outcome expected_utility_oracle() {
  Outcome o;
  Rng rng(303);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const UtilityKind kinds[] = {UtilityKind::kPrecision, UtilityKind::kRecall,
                               UtilityKind::kF1, UtilityKind::kNdcg};
  const oracle::Utility oracle_kinds[] = {oracle::Utility::kPrecision,
                                          oracle::Utility::kRecall,
                                          oracle::Utility::kF1, oracle::Utility::kNdcg};
  double worst_z = 0.0;
  int exceed = 0;
  for (int inst = 0; inst < 50; ++inst) {
    std::vector<double> top(1 + rng() % 10);
    std::vector<double> rest(rng() % 21);
    for (auto& p : top) p = unit(rng);
    for (auto& p : rest) p = unit(rng);
    for (int k = 0; k < 4; ++k) {
      const double exact = expected_utility(kinds[k], top, rest);
      const auto mc = oracle::monte_carlo_utility(oracle_kinds[k], top, rest, 200000,
                                                  1000 * inst + k);
      const double z = std::abs(exact - mc.mean) / mc.std_error;
      worst_z = std::max(worst_z, z);
      if (!(std::abs(exact - mc.mean) <= 3.0 * mc.std_error)) {
        ++exceed;
        o.require(false, std::string(utility_kind_name(kinds[k])) + " instance " +
                             std::to_string(inst) + " off by " + fmt(z) + " SE");
      }
    }
  }
  if (o.pass) o.detail = "200 comparisons, max |z| " + fmt(worst_z);
  else o.detail += " (" + std::to_string(exceed) + " of 200 beyond 3 SE)";
  return o;
}

Outcome calibrator_recovery() {
  Outcome o;
  Rng rng(404);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<CalibrationSample> platt(100000);
  for (auto& x : platt) {
    x.s = normal(rng);
    x.y = unit(rng) < sigmoid(2.0 * x.s - 1.0) ? 1.0 : 0.0;
  }
  const Calibrator fitted = fit(CalibratorKind::kPlatt, platt, false);
  o.require(std::abs(fitted.a - 2.0) <= 0.1 && std::abs(fitted.b + 1.0) <= 0.1,
            "platt (a, b) = (" + fmt(fitted.a) + ", " + fmt(fitted.b) + ")");

  std::bernoulli_distribution coin(0.5);
  std::vector<CalibrationSample> two(100000);
  std::vector<double> bayes(two.size());
  for (std::size_t n = 0; n < two.size(); ++n) {
    const bool pos = coin(rng);
    two[n].y = pos ? 1.0 : 0.0;
    two[n].s = normal(rng) + (pos ? 1.0 : -1.0);
    bayes[n] = sigmoid(2.0 * two[n].s);
  }
  const Calibrator gauss = fit(CalibratorKind::kGaussian, two, false);
  const double nll_fit = weighted_nll(gauss, two, false);
  const double nll_bayes = weighted_nll(bayes, two, false);
  const double rel = std::abs(nll_fit - nll_bayes) / nll_bayes;
  o.require(rel < 0.01, "gaussian NLL relative gap " + fmt(rel));
  if (o.pass) {
    o.detail = "platt (" + fmt(fitted.a) + ", " + fmt(fitted.b) +
               "), gaussian NLL gap " + fmt(rel);
  }
  return o;
}

Outcome unbiasedness() {
  Outcome o;
  Rng rng(505);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<CalibrationSample> samples(50000);
  for (auto& x : samples) {
    x.s = normal(rng);
    x.y = unit(rng) < sigmoid(1.5 * x.s) ? 1.0 : 0.0;
  }
  for (auto kind : {CalibratorKind::kPlatt, CalibratorKind::kGaussian,
                    CalibratorKind::kGamma, CalibratorKind::kHistogram}) {
    auto data = samples;
    if (kind == CalibratorKind::kGamma) {
      for (auto& x : data) x.s = std::exp(x.s);
    }
    const FitResult biased = fit_traced(kind, data, false);
    const FitResult unbiased = fit_traced(kind, data, true);
    o.require(biased.calibrator == unbiased.calibrator &&
                  biased.loss_trace == unbiased.loss_trace,
              std::string(calibrator_kind_name(kind)) + " fit differs with unit propensity");
  }

  // Exposure with known theta, relevance from known p*; the per-sample
  // difference between the unbiased and fully-observed NLL has mean zero.
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t count = 0;
  std::vector<double> per_seed;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng r(7000 + seed);
    const std::size_t n = 100000;
    std::vector<double> probs(n);
    std::vector<CalibrationSample> observed(n);
    std::vector<CalibrationSample> full(n);
    for (std::size_t k = 0; k < n; ++k) {
      const double s = normal(r);
      const double p = sigmoid(2.0 * s - 1.0);
      const double theta = 0.1 + 0.9 * unit(r);
      const bool relevant = unit(r) < p;
      const bool exposed = unit(r) < theta;
      probs[k] = p;
      full[k] = {s, relevant ? 1.0 : 0.0, 1.0};
      observed[k] = {s, relevant && exposed ? 1.0 : 0.0, theta};
      const double d =
          weighted_nll(std::span(&probs[k], 1), std::span(&observed[k], 1), true) -
          weighted_nll(std::span(&probs[k], 1), std::span(&full[k], 1), false);
      sum += d;
      sum_sq += d * d;
      ++count;
    }
    per_seed.push_back((weighted_nll(probs, observed, true) -
                        weighted_nll(probs, full, false)) / static_cast<double>(n));
  }
  const double n = static_cast<double>(count);
  const double mean = sum / n;
  const double se = std::sqrt((sum_sq / n - mean * mean) / (n - 1.0));
  o.require(std::abs(mean) <= 3.0 * se,
            "mean NLL gap " + fmt(mean) + " vs 3 SE " + fmt(3.0 * se));
  if (o.pass) {
    o.detail = "unit propensity bit-identical; NLL gap " + fmt(mean) + " (SE " + fmt(se) +
               ", 10 seeds x 1e5)";
  }
  return o;
}

Outcome ece_sanity() {
  Outcome o;
  Rng rng(606);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Prediction> preds(10000);
  for (auto& x : preds) {
    x.p = unit(rng);
    x.y = unit(rng) < x.p ? 1 : 0;
  }
  const double e = ece(preds, 15);
  o.require(e <= 0.02, "oracle ECE " + fmt(e));
  std::vector<Prediction> constant;
  for (int k = 0; k < 1000; ++k) constant.push_back({0.7, k % 2});
  const double c = ece(constant, 15);
  o.require(std::abs(c - 0.2) <= 1e-12, "constant-case ECE " + fmt(c));
  if (o.pass) o.detail = "oracle ECE " + fmt(e) + ", constant case " + fmt(c);
  return o;
}

Outcome perk_dominance() {
  Outcome o;
  Rng rng(707);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t users = 300;
  const std::size_t items = 120;
  const std::size_t k_max = 20;
  const std::vector<std::size_t> fixed_ks{1, 5, 10, 20};

  struct User {
    std::vector<double> probs;  // sorted descending: the oracle ranking
    std::size_t k_star = 0;
  };
  std::vector<User> pool(users);
  for (auto& u : pool) {
    // Users differ in how many relevant items they have and how sharply the
    // ranking separates them.
    const double offset = -6.0 + 6.0 * unit(rng);
    const double sharpness = 0.5 + 2.5 * unit(rng);
    u.probs.resize(items);
    for (auto& p : u.probs) p = sigmoid(offset + sharpness * normal(rng));
    std::sort(u.probs.begin(), u.probs.end(), std::greater<>());
    const std::span<const double> all(u.probs);
    const auto curve = utility_curve(all.first(k_max), all.subspan(k_max), UtilityKind::kF1);
    u.k_star = select_k(curve);
  }

  double perk_total = 0.0;
  std::vector<double> fixed_total(fixed_ks.size(), 0.0);
  std::size_t samples = 0;
  std::vector<int> relevant(items);
  for (std::uint64_t draw = 0; draw < 20; ++draw) {
    Rng r(9000 + draw);
    for (const auto& u : pool) {
      for (std::size_t i = 0; i < items; ++i) relevant[i] = unit(r) < u.probs[i];
      auto realized = [&](std::size_t k) {
        const std::vector<int> top(relevant.begin(), relevant.begin() + k);
        int rest = 0;
        for (std::size_t i = k; i < items; ++i) rest += relevant[i];
        return oracle::realized_utility(oracle::Utility::kF1, top, rest);
      };
      perk_total += realized(u.k_star);
      for (std::size_t j = 0; j < fixed_ks.size(); ++j) fixed_total[j] += realized(fixed_ks[j]);
      ++samples;
    }
  }
  const double perk_mean = perk_total / static_cast<double>(samples);
  std::string detail = "F1@k* " + fmt(perk_mean);
  for (std::size_t j = 0; j < fixed_ks.size(); ++j) {
    const double mean = fixed_total[j] / static_cast<double>(samples);
    detail += ", F1@" + std::to_string(fixed_ks[j]) + " " + fmt(mean);
    o.require(perk_mean >= mean - 0.01,
              "F1@k* " + fmt(perk_mean) + " < F1@" + std::to_string(fixed_ks[j]) +
                  " " + fmt(mean) + " - 0.01");
  }
  if (o.pass) o.detail = detail;
  return o;
}

Outcome backbone_sanity() {
  Outcome o;
  SyntheticConfig sc;
  sc.num_users = 200;
  sc.num_items = 300;
  sc.rank = 2;
  sc.seed = 808;
  const Dataset d = split_per_user(generate_interactions(sc), {0.8, 0.1, 0.1}, 808);
  TrainConfig cfg;
  MfParams p = init_params(d.num_users(), d.num_items(), 8, stream_seed(808, Stream::kInit));
  double best = 0.0;
  int reached = -1;
  for (int epoch = 0; epoch < 30; ++epoch) {
    Rng rng = epoch_rng(stream_seed(808, Stream::kTrain), epoch);
    bpr_epoch(p, d, cfg, rng);
  }
  Rng eval_rng(stream_seed(808, Stream::kEvaluation));
  best = auc(p, d, Split::kValidation, eval_rng, 100);
  reached = 30;
  o.require(best >= 0.85, "validation AUC " + fmt(best));
  if (o.pass) o.detail = "validation AUC " + fmt(best) + " after " + std::to_string(reached) + " epochs";
  return o;
}

Outcome distillation_composition() {
  Outcome o;
  SyntheticConfig sc;
  sc.num_users = 80;
  sc.num_items = 150;
  sc.seed = 909;
  const Dataset d = split_per_user(generate_interactions(sc), {0.8, 0.1, 0.1}, 909);
  TrainConfig cfg;
  cfg.loss_kind = LossKind::kPointwise;
  BdConfig bd;
  bd.lambda_ts = 0.0;
  bd.lambda_st = 0.0;
  MfParams teacher = init_params(d.num_users(), d.num_items(), 16, 1);
  MfParams student = init_params(d.num_users(), d.num_items(), 4, 2);
  MfParams t_ref = teacher;
  MfParams s_ref = student;
  for (std::uint64_t epoch = 0; epoch < 3; ++epoch) {
    auto streams = make_cotrain_streams(909, epoch);
    cotrain_epoch(teacher, student, d, cfg, bd, streams);
    Rng t_rng = epoch_rng(stream_seed(909, Stream::kTeacherTrain), epoch);
    Rng s_rng = epoch_rng(stream_seed(909, Stream::kStudentTrain), epoch);
    pointwise_epoch(t_ref, d, cfg, t_rng);
    pointwise_epoch(s_ref, d, cfg, s_rng);
  }
  o.require(teacher == t_ref && student == s_ref,
            "zero-lambda co-training differs from independent training");

  Rng rng(910);
  int violations = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng() % 80;
    std::vector<std::uint32_t> mine(n);
    std::vector<std::uint32_t> theirs(n);
    std::vector<std::uint32_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<std::uint32_t>(i + 1);
    std::shuffle(perm.begin(), perm.end(), rng);
    mine = perm;
    std::shuffle(perm.begin(), perm.end(), rng);
    theirs = perm;
    const double eta = 0.01 + 2.0 * std::uniform_real_distribution<double>(0, 1)(rng);
    const int cap = 1 + static_cast<int>(rng() % 90);
    const auto w = rank_discrepancy_weights(mine, theirs, eta, cap);
    std::vector<std::pair<long, double>> by_gap;
    for (std::size_t i = 0; i < n; ++i) {
      const long gap = long(std::min<std::uint32_t>(mine[i], cap)) -
                       long(std::min<std::uint32_t>(theirs[i], cap));
      if ((w[i] == 0.0) != (gap <= 0)) ++violations;
      by_gap.emplace_back(gap, w[i]);
    }
    std::sort(by_gap.begin(), by_gap.end());
    for (std::size_t i = 1; i < by_gap.size(); ++i) {
      if (by_gap[i].second < by_gap[i - 1].second) ++violations;
    }
  }
  o.require(violations == 0, std::to_string(violations) + " weight property violations");
  if (o.pass) o.detail = "3 epochs bit-identical; 500 random rank tables, 0 violations";
  return o;
}

int cli(const std::vector<std::string>& args, std::string* out = nullptr) {
  std::ostringstream o;
  std::ostringstream e;
  const int code = run_cli(args, o, e);
  if (out) *out = o.str();
  if (code != 0) std::cerr << "  calrec " << args.front() << ": " << e.str();
  return code;
}

Outcome end_to_end_smoke() {
  Outcome o;
  oracle::ScratchDir dir("smoke");
  const std::string input = std::string(CALREC_SOURCE_DIR) + "/data/synthetic_ml100k.csv";
  const std::string data = (dir / "bundle").string();
  const std::string model = (dir / "model.json").string();
  const std::string cal = (dir / "cal").string();
  const std::string fixed = (dir / "fixed.jsonl").string();
  const std::string perk = (dir / "perk.jsonl").string();
  const std::string report = (dir / "eval.json").string();

  const std::vector<std::vector<std::string>> steps{
      {"ingest", "--input", input, "--out", data},
      {"train", "--data", data, "--out", model},
      {"calibrate", "--data", data, "--model", model, "--out", cal},
      {"recommend", "--data", data, "--model", model, "--perk", "--calibrator",
       cal + "/calibrator.json", "--out", perk},
      {"recommend", "--data", data, "--model", model, "--k", "20", "--out", fixed},
      {"eval", "--data", data, "--fixed", fixed, "--perk", perk, "--out", report,
       "--table-csv", (dir / "table.csv").string()},
  };
  for (const auto& step : steps) {
    if (cli(step) != 0) {
      o.require(false, step.front() + " failed");
      return o;
    }
  }
  const Json ece = read_json(cal + "/ece_report.json");
  const double before = ece.at("ece_uncalibrated");
  const double after = ece.at("ece_calibrated");
  o.require(after < before, "calibrated ECE " + fmt(after) + " >= uncalibrated " + fmt(before));

  const Json eval = read_json(report);
  const auto& ks = eval.at("ks");
  const auto& comparison = eval.at("comparison");
  bool table_ok = comparison.size() == ks.size() + 1;
  for (std::size_t r = 0; table_ok && r < ks.size(); ++r) {
    table_ok = comparison[r].at("method") == "fixed" && comparison[r].at("k") == ks[r];
  }
  table_ok = table_ok && comparison.back().at("method") == "perk";
  o.require(table_ok, "comparison table lacks one row per fixed k plus a perk row");
  if (o.pass) {
    o.detail = "ECE " + fmt(before) + " -> " + fmt(after) + ", mean k* " +
               fmt(eval.at("perk").at("mean_k_star").get<double>()) + ", " +
               std::to_string(comparison.size()) + " comparison rows";
  }
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double limit_seconds;  // <= 0 means no runtime bound
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "gradient correctness", 5, gradient_correctness},
      {2, "poisson-binomial exactness", 10, poisson_binomial_exactness},
      {3, "expected-utility oracle equivalence", 60, expected_utility_oracle},
      {4, "calibrator recovery", 30, calibrator_recovery},
      {5, "unbiasedness reduction and simulation", 30, unbiasedness},
      {6, "ECE sanity", 0, ece_sanity},
      {7, "PerK dominance under oracle probabilities", 60, perk_dominance},
      {8, "backbone sanity", 60, backbone_sanity},
      {9, "distillation composition", 0, distillation_composition},
      {10, "end-to-end smoke", 600, end_to_end_smoke},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.limit_seconds > 0 && seconds >= c.limit_seconds) {
      o.pass = false;
      o.detail += (o.detail.empty() ? "" : "; ") + std::string("runtime over ") +
                  fmt(c.limit_seconds) + " s";
    }
    failures += !o.pass;
    std::printf("[%s] %2d %-42s %7.2f s  %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name,
                seconds, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
              criteria.size());
  return failures == 0 ? 0 : 1;
}
