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

#include "calrec/calibration.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include "calrec/error.hpp"
#include "calrec/math.hpp"

namespace calrec {

const char* calibrator_kind_name(CalibratorKind kind) {
  switch (kind) {
    case CalibratorKind::kPlatt:
      return "platt";
    case CalibratorKind::kGaussian:
      return "gaussian";
    case CalibratorKind::kGamma:
      return "gamma";
    case CalibratorKind::kHistogram:
      return "histogram";
  }
  return "?";
}

CalibratorKind parse_calibrator_kind(const std::string& name) {
  if (name == "platt") return CalibratorKind::kPlatt;
  if (name == "gaussian") return CalibratorKind::kGaussian;
  if (name == "gamma") return CalibratorKind::kGamma;
  if (name == "histogram") return CalibratorKind::kHistogram;
  throw ValidationError("unknown calibrator kind: " + name);
}

namespace {

using Vec3 = std::array<double, 3>;

Vec3 features(CalibratorKind kind, double s) {
  switch (kind) {
    case CalibratorKind::kPlatt:
      return {s, 1.0, 0.0};
    case CalibratorKind::kGaussian:
      return {s * s, s, 1.0};
    case CalibratorKind::kGamma:
      return {std::log(s), s, 1.0};
    case CalibratorKind::kHistogram:
      break;
  }
  throw ValidationError("histogram calibrator has no logit features");
}

double dot(const Vec3& x, const Vec3& y) {
  return x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
}

}  // namespace

double apply(const Calibrator& cal, double s) {
  if (std::isnan(s)) throw ValidationError("calibrator applied to NaN score");
  if (cal.kind == CalibratorKind::kHistogram) {
    if (cal.bins.empty()) throw ValidationError("histogram calibrator has no bins");
    auto it = std::lower_bound(
        cal.bins.begin(), cal.bins.end(), s,
        [](const HistogramBin& bin, double v) { return bin.upper_edge < v; });
    if (it == cal.bins.end()) --it;
    return it->value;
  }
  if (cal.kind == CalibratorKind::kGamma && !(s > 0)) {
    throw ValidationError("gamma calibrator needs a positive score, got " +
                          std::to_string(s));
  }
  return sigmoid(dot({cal.a, cal.b, cal.c}, features(cal.kind, s)));
}

double calibrate_score(const Calibrator& cal, double raw_score) {
  double s = raw_score + cal.score_shift;
  if (cal.kind == CalibratorKind::kGamma && cal.score_shift != 0.0) {
    s = std::max(s, kGammaScoreEpsilon);
  }
  return apply(cal, s);
}

namespace {

struct Weights {
  double pos;
  double neg;
};

Weights weights_of(const CalibrationSample& x, bool unbiased) {
  const double pos = unbiased ? x.y / x.theta : x.y;
  return {pos, 1.0 - pos};
}

void validate_samples(CalibratorKind kind,
                      std::span<const CalibrationSample> samples) {
  std::size_t positives = 0;
  std::size_t negatives = 0;
  for (const auto& x : samples) {
    if (!std::isfinite(x.s)) throw ValidationError("non-finite calibration score");
    if (x.y != 0.0 && x.y != 1.0) throw ValidationError("labels must be 0 or 1");
    if (!(x.theta > 0.0 && x.theta <= 1.0)) {
      throw ValidationError("propensity must lie in (0, 1]");
    }
    if (kind == CalibratorKind::kGamma && !(x.s > 0)) {
      throw ValidationError("gamma calibration needs positive scores");
    }
    (x.y == 1.0 ? positives : negatives) += 1;
  }
  if (positives == 0 || negatives == 0) {
    throw ValidationError(
        "calibration samples need at least one positive and one negative");
  }
}

Calibrator fit_histogram(std::span<const CalibrationSample> samples,
                         bool unbiased) {
  constexpr std::size_t kBins = 15;
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) {
    return samples[l].s < samples[r].s;
  });
  const std::size_t n = order.size();
  const std::size_t bins = std::min(kBins, n);
  Calibrator cal;
  cal.kind = CalibratorKind::kHistogram;
  cal.a = cal.b = cal.c = 0.0;
  std::size_t start = 0;
  for (std::size_t b = 0; b < bins && start < n; ++b) {
    std::size_t end = start + n / bins + (b < n % bins ? 1 : 0);
    end = std::min(std::max(end, start + 1), n);
    // Keep tied scores in one bin so edges stay strictly increasing.
    while (end < n && samples[order[end]].s == samples[order[end - 1]].s) ++end;
    double pos = 0.0;
    for (std::size_t k = start; k < end; ++k) {
      pos += weights_of(samples[order[k]], unbiased).pos;
    }
    const double value =
        std::clamp(pos / static_cast<double>(end - start), 0.0, 1.0);
    cal.bins.push_back({samples[order[end - 1]].s, value});
    start = end;
  }
  if (start < n) {
    // Remaining samples (after tie extension) join the last bin.
    double pos = 0.0;
    for (std::size_t k = start; k < n; ++k) {
      pos += weights_of(samples[order[k]], unbiased).pos;
    }
    cal.bins.push_back({samples[order[n - 1]].s,
                        std::clamp(pos / static_cast<double>(n - start), 0.0, 1.0)});
  }
  return cal;
}

class Objective {
 public:
  Objective(CalibratorKind kind, std::span<const CalibrationSample> samples,
            bool unbiased)
      : kind_(kind) {
    feats_.reserve(samples.size());
    weights_.reserve(samples.size());
    for (const auto& x : samples) {
      feats_.push_back(features(kind, x.s));
      weights_.push_back(weights_of(x, unbiased));
    }
    scale_ = 1.0 / static_cast<double>(samples.size());
  }

  double value(const Vec3& theta) const {
    double total = 0.0;
    for (std::size_t n = 0; n < feats_.size(); ++n) {
      const double z = dot(theta, feats_[n]);
      total += weights_[n].pos * softplus(-z) + weights_[n].neg * softplus(z);
    }
    return total * scale_;
  }

  Vec3 gradient(const Vec3& theta) const {
    Vec3 g{0.0, 0.0, 0.0};
    for (std::size_t n = 0; n < feats_.size(); ++n) {
      const double p = sigmoid(dot(theta, feats_[n]));
      const double dz = weights_[n].pos * (p - 1.0) + weights_[n].neg * p;
      for (int k = 0; k < 3; ++k) g[k] += dz * feats_[n][k];
    }
    for (double& v : g) v *= scale_;
    return g;
  }

  Vec3 project(Vec3 theta) const {
    if (kind_ == CalibratorKind::kPlatt) {
      theta[0] = std::max(theta[0], 0.0);
      theta[2] = 0.0;
    }
    return theta;
  }

 private:
  CalibratorKind kind_;
  std::vector<Vec3> feats_;
  std::vector<Weights> weights_;
  double scale_ = 1.0;
};

}  // namespace

FitResult fit_traced(CalibratorKind kind,
                     std::span<const CalibrationSample> samples, bool unbiased,
                     const FitOptions& options) {
  validate_samples(kind, samples);
  FitResult result;
  if (kind == CalibratorKind::kHistogram) {
    result.calibrator = fit_histogram(samples, unbiased);
    result.converged = true;
    return result;
  }
  if (options.max_iters < 0 || !(options.tol > 0)) {
    throw ValidationError("fit options need max_iters >= 0 and tol > 0");
  }

  const Objective objective(kind, samples, unbiased);
  Vec3 theta = kind == CalibratorKind::kGaussian ? Vec3{0.0, 1.0, 0.0}
                                                 : Vec3{1.0, 0.0, 0.0};
  double loss = objective.value(theta);
  if (!std::isfinite(loss)) {
    throw ValidationError("non-finite calibration loss at iteration 0");
  }
  result.loss_trace.push_back(loss);

  constexpr double kArmijo = 1e-4;
  constexpr int kMaxBacktracks = 60;
  double step = 1.0;
  Vec3 prev_theta{};
  Vec3 prev_grad{};
  int iter = 0;
  for (; iter < options.max_iters; ++iter) {
    const Vec3 g = objective.gradient(theta);
    // Projected-gradient residual; equals |g|_inf away from the bound.
    const Vec3 moved = objective.project({theta[0] - g[0], theta[1] - g[1],
                                          theta[2] - g[2]});
    double residual = 0.0;
    for (int k = 0; k < 3; ++k) {
      residual = std::max(residual, std::abs(theta[k] - moved[k]));
    }
    if (residual < options.tol) {
      result.converged = true;
      break;
    }

    // Trial step: Barzilai-Borwein estimate from the last accepted move,
    // else twice the last accepted step. Backtracking keeps the loss
    // monotone either way.
    double t = std::min(step * 2.0, 1e4);
    if (iter > 0) {
      double ss = 0.0;
      double sy = 0.0;
      for (int k = 0; k < 3; ++k) {
        const double dx = theta[k] - prev_theta[k];
        ss += dx * dx;
        sy += dx * (g[k] - prev_grad[k]);
      }
      if (sy > 0.0 && std::isfinite(ss / sy)) t = std::min(ss / sy, 1e4);
    }
    bool accepted = false;
    bool saw_finite = false;
    for (int bt = 0; bt < kMaxBacktracks; ++bt, t *= 0.5) {
      const Vec3 cand = objective.project(
          {theta[0] - t * g[0], theta[1] - t * g[1], theta[2] - t * g[2]});
      const double cand_loss = objective.value(cand);
      if (!std::isfinite(cand_loss)) continue;
      saw_finite = true;
      const double decrease = g[0] * (cand[0] - theta[0]) +
                              g[1] * (cand[1] - theta[1]) +
                              g[2] * (cand[2] - theta[2]);
      if (cand_loss <= loss + kArmijo * decrease && cand_loss <= loss) {
        prev_theta = theta;
        prev_grad = g;
        theta = cand;
        loss = cand_loss;
        step = t;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (!saw_finite) {
        throw ValidationError("non-finite calibration loss at iteration " +
                              std::to_string(iter + 1));
      }
      // No representable descent step left.
      result.converged = true;
      break;
    }
    result.loss_trace.push_back(loss);
  }
  result.iterations = iter;
  result.calibrator.kind = kind;
  result.calibrator.a = theta[0];
  result.calibrator.b = theta[1];
  result.calibrator.c = theta[2];
  return result;
}

Calibrator fit(CalibratorKind kind, std::span<const CalibrationSample> samples,
               bool unbiased, const FitOptions& options) {
  return fit_traced(kind, samples, unbiased, options).calibrator;
}

Calibrator fit_raw_scores(CalibratorKind kind,
                          std::span<const CalibrationSample> samples,
                          bool unbiased, const FitOptions& options) {
  if (kind != CalibratorKind::kGamma || samples.empty()) {
    return fit(kind, samples, unbiased, options);
  }
  double min_score = std::numeric_limits<double>::infinity();
  for (const auto& x : samples) min_score = std::min(min_score, x.s);
  const double shift = -min_score + kGammaScoreEpsilon;
  std::vector<CalibrationSample> shifted(samples.begin(), samples.end());
  for (auto& x : shifted) x.s += shift;
  Calibrator cal = fit(kind, shifted, unbiased, options);
  cal.score_shift = shift;
  return cal;
}

double weighted_nll(std::span<const double> probs,
                    std::span<const CalibrationSample> samples, bool unbiased) {
  if (probs.size() != samples.size()) {
    throw ValidationError("weighted_nll: size mismatch");
  }
  constexpr double kClamp = 1e-12;
  double total = 0.0;
  for (std::size_t n = 0; n < samples.size(); ++n) {
    const double p = std::clamp(probs[n], kClamp, 1.0 - kClamp);
    const Weights w = weights_of(samples[n], unbiased);
    total += -w.pos * std::log(p) - w.neg * std::log1p(-p);
  }
  return total;
}

double weighted_nll(const Calibrator& cal,
                    std::span<const CalibrationSample> samples, bool unbiased) {
  std::vector<double> probs;
  probs.reserve(samples.size());
  for (const auto& x : samples) probs.push_back(apply(cal, x.s));
  return weighted_nll(probs, samples, unbiased);
}

PropensityModel estimate_propensity(std::span<const std::uint32_t> popularity,
                                    double tau, double theta_min) {
  if (!(tau >= 0)) throw ValidationError("propensity tau must be >= 0");
  if (!(theta_min > 0 && theta_min <= 1)) {
    throw ValidationError("propensity floor must lie in (0, 1]");
  }
  std::uint32_t max_pop = 0;
  for (auto p : popularity) max_pop = std::max(max_pop, p);
  if (max_pop == 0) {
    throw ValidationError("propensity needs at least one item with popularity > 0");
  }
  PropensityModel model;
  model.tau = tau;
  model.theta_min = theta_min;
  model.theta.reserve(popularity.size());
  for (auto p : popularity) {
    const double ratio = static_cast<double>(p) / static_cast<double>(max_pop);
    model.theta.push_back(std::clamp(std::pow(ratio, tau), theta_min, 1.0));
  }
  return model;
}

std::vector<CalibrationSample> collect_calibration_samples(
    const MfParams& params, const Dataset& dataset, Split split,
    int negatives_per_positive, const PropensityModel* propensity, Rng& rng) {
  const auto& positives = dataset.interactions(split);
  if (positives.empty()) {
    throw ValidationError(std::string("split '") + split_name(split) +
                          "' has no interactions");
  }
  if (negatives_per_positive < 0) {
    throw ValidationError("negatives_per_positive must be >= 0");
  }
  if (propensity && propensity->theta.size() != dataset.num_items()) {
    throw ValidationError("propensity model does not cover every item");
  }
  auto theta_of = [&](ItemId i) {
    return propensity ? propensity->theta[i] : 1.0;
  };
  std::vector<CalibrationSample> samples;
  samples.reserve(positives.size() * (1 + negatives_per_positive));
  for (const auto& x : positives) {
    samples.push_back({score(params, x.user, x.item), 1.0, theta_of(x.item)});
    for (int n = 0; n < negatives_per_positive; ++n) {
      const ItemId j = sample_unobserved(dataset, x.user, rng);
      samples.push_back({score(params, x.user, j), 0.0, theta_of(j)});
    }
  }
  return samples;
}

const char* bin_scheme_name(BinScheme scheme) {
  return scheme == BinScheme::kEqualWidth ? "equal_width" : "equal_mass";
}

BinScheme parse_bin_scheme(const std::string& name) {
  if (name == "equal_width") return BinScheme::kEqualWidth;
  if (name == "equal_mass") return BinScheme::kEqualMass;
  throw ValidationError("unknown bin scheme: " + name);
}

std::vector<ReliabilityRow> reliability_table(std::span<const Prediction> preds,
                                              int num_bins, BinScheme scheme) {
  if (preds.empty()) throw ValidationError("no predictions to bin");
  if (num_bins < 1) throw ValidationError("num_bins must be >= 1");
  for (const auto& x : preds) {
    if (!(x.p >= 0.0 && x.p <= 1.0)) {
      throw ValidationError("probability outside [0, 1]: " + std::to_string(x.p));
    }
    if (x.y != 0 && x.y != 1) throw ValidationError("labels must be 0 or 1");
  }
  const auto bins = static_cast<std::size_t>(num_bins);
  std::vector<ReliabilityRow> rows(bins);
  std::vector<double> sum_p(bins, 0.0);
  std::vector<double> sum_y(bins, 0.0);

  if (scheme == BinScheme::kEqualWidth) {
    for (std::size_t b = 0; b < bins; ++b) {
      rows[b].bin_lower = static_cast<double>(b) / static_cast<double>(bins);
      rows[b].bin_upper = static_cast<double>(b + 1) / static_cast<double>(bins);
    }
    for (const auto& x : preds) {
      auto b = std::min(static_cast<std::size_t>(x.p * static_cast<double>(bins)),
                        bins - 1);
      ++rows[b].count;
      sum_p[b] += x.p;
      sum_y[b] += x.y;
    }
  } else {
    std::vector<Prediction> sorted(preds.begin(), preds.end());
    std::sort(sorted.begin(), sorted.end(),
              [](const Prediction& l, const Prediction& r) {
                return l.p != r.p ? l.p < r.p : l.y < r.y;
              });
    const std::size_t n = sorted.size();
    std::size_t start = 0;
    double prev_upper = 0.0;
    for (std::size_t b = 0; b < bins; ++b) {
      const std::size_t size = n / bins + (b < n % bins ? 1 : 0);
      if (size == 0) {
        rows[b].bin_lower = rows[b].bin_upper = prev_upper;
        continue;
      }
      rows[b].bin_lower = sorted[start].p;
      rows[b].bin_upper = sorted[start + size - 1].p;
      prev_upper = rows[b].bin_upper;
      for (std::size_t k = start; k < start + size; ++k) {
        sum_p[b] += sorted[k].p;
        sum_y[b] += sorted[k].y;
      }
      rows[b].count = size;
      start += size;
    }
  }
  for (std::size_t b = 0; b < bins; ++b) {
    if (rows[b].count == 0) continue;
    const auto count = static_cast<double>(rows[b].count);
    rows[b].mean_p = sum_p[b] / count;
    rows[b].frac_pos = sum_y[b] / count;
  }
  return rows;
}

double ece_from_table(std::span<const ReliabilityRow> rows) {
  std::size_t total = 0;
  for (const auto& row : rows) total += row.count;
  if (total == 0) throw ValidationError("reliability table is empty");
  double sum = 0.0;
  for (const auto& row : rows) {
    if (row.count == 0) continue;
    sum += static_cast<double>(row.count) * std::abs(row.frac_pos - row.mean_p);
  }
  return sum / static_cast<double>(total);
}

double ece(std::span<const Prediction> preds, int num_bins, BinScheme scheme) {
  return ece_from_table(reliability_table(preds, num_bins, scheme));
}

}  // namespace calrec
