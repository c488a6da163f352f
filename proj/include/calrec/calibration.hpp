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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "calrec/dataset.hpp"
#include "calrec/random.hpp"
#include "calrec/ranker.hpp"

namespace calrec {

enum class CalibratorKind { kPlatt, kGaussian, kGamma, kHistogram };

const char* calibrator_kind_name(CalibratorKind kind);
CalibratorKind parse_calibrator_kind(const std::string& name);

struct HistogramBin {
  double upper_edge = 0.0;
  double value = 0.0;
  friend bool operator==(const HistogramBin&, const HistogramBin&) = default;
};

// Parametric score-to-probability map:
//   platt     p(s) = sigma(a*s + b)
//   gaussian  p(s) = sigma(a*s^2 + b*s + c)
//   gamma     p(s) = sigma(a*ln(s) + b*s + c),  s > 0
//   histogram p(s) = value of the first bin with s <= upper_edge
// `score_shift` is added to raw model scores before the map is applied
// (see calibrate_score); it is nonzero only for gamma maps fitted on
// unconstrained scores.
struct Calibrator {
  CalibratorKind kind = CalibratorKind::kPlatt;
  double a = 1.0;
  double b = 0.0;
  double c = 0.0;
  double score_shift = 0.0;
  std::vector<HistogramBin> bins;

  friend bool operator==(const Calibrator&, const Calibrator&) = default;
};

// Added to shifted gamma scores so the smallest fitting score maps to a
// positive value.
inline constexpr double kGammaScoreEpsilon = 1e-6;

// The calibration map itself. Throws for NaN, and for s <= 0 on gamma.
double apply(const Calibrator& cal, double s);

// Maps a raw model score: adds score_shift, and for shifted gamma maps
// floors the result at kGammaScoreEpsilon (unseen scores below the fitting
// minimum stay in the domain).
double calibrate_score(const Calibrator& cal, double raw_score);

struct CalibrationSample {
  double s = 0.0;
  double y = 0.0;
  double theta = 1.0;
};

struct FitOptions {
  int max_iters = 1000;
  double tol = 1e-8;
};

struct FitResult {
  Calibrator calibrator;
  // Objective after each accepted step, starting with the initial point.
  std::vector<double> loss_trace;
  int iterations = 0;
  bool converged = false;
};

// Weighted negative log-likelihood
//   L = sum_n w+ * (-ln p(s_n)) + w- * (-ln(1 - p(s_n)))
// with (w+, w-) = (y, 1 - y), or (y/theta, 1 - y/theta) when `unbiased`.
// The optimizer minimizes L divided by the sample count; the minimizer is
// the same.
FitResult fit_traced(CalibratorKind kind,
                     std::span<const CalibrationSample> samples, bool unbiased,
                     const FitOptions& options = {});
Calibrator fit(CalibratorKind kind, std::span<const CalibrationSample> samples,
               bool unbiased, const FitOptions& options = {});

// fit() on raw model scores. Gamma maps first shift scores by
// (-min_score + kGammaScoreEpsilon) and record the shift.
Calibrator fit_raw_scores(CalibratorKind kind,
                          std::span<const CalibrationSample> samples,
                          bool unbiased, const FitOptions& options = {});

// The objective L above for explicit probabilities (clamped to
// [1e-12, 1 - 1e-12] before logs).
double weighted_nll(std::span<const double> probs,
                    std::span<const CalibrationSample> samples, bool unbiased);
double weighted_nll(const Calibrator& cal,
                    std::span<const CalibrationSample> samples, bool unbiased);

// Popularity-based exposure propensity:
//   theta_i = clip((pop_i / max_pop)^tau, theta_min, 1).
struct PropensityModel {
  std::vector<double> theta;
  double tau = 0.5;
  double theta_min = 0.01;
};

PropensityModel estimate_propensity(std::span<const std::uint32_t> popularity,
                                    double tau = 0.5, double theta_min = 0.01);

// Split positives become y = 1 samples, each followed by
// `negatives_per_positive` uniformly drawn unobserved items with y = 0.
std::vector<CalibrationSample> collect_calibration_samples(
    const MfParams& params, const Dataset& dataset, Split split,
    int negatives_per_positive, const PropensityModel* propensity, Rng& rng);

struct Prediction {
  double p = 0.0;
  int y = 0;
};

enum class BinScheme { kEqualWidth, kEqualMass };

const char* bin_scheme_name(BinScheme scheme);
BinScheme parse_bin_scheme(const std::string& name);

struct ReliabilityRow {
  double bin_lower = 0.0;
  double bin_upper = 0.0;
  std::size_t count = 0;
  double mean_p = 0.0;
  double frac_pos = 0.0;
};

// One row per bin, empty bins included. Equal-mass bins take consecutive
// runs of the predictions sorted by (p, y), the first N % num_bins bins
// holding one extra element.
std::vector<ReliabilityRow> reliability_table(
    std::span<const Prediction> preds, int num_bins = 15,
    BinScheme scheme = BinScheme::kEqualWidth);

double ece(std::span<const Prediction> preds, int num_bins = 15,
           BinScheme scheme = BinScheme::kEqualWidth);

// sum_b (count_b / N) * |frac_pos_b - mean_p_b|
double ece_from_table(std::span<const ReliabilityRow> rows);

}  // namespace calrec
