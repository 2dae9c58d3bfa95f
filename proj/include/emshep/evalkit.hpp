// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

// Detection metrics and leakage statistics.  Positive class = adversarial.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace emshep::evalkit {

double f1(std::size_t tp, std::size_t fp, std::size_t fn);

struct PrPoint {
  double threshold = 0.0;  // positive iff score >= threshold
  double recall = 0.0;
  double precision = 1.0;
};

struct PrCurve {
  std::vector<PrPoint> points;  // starts at (recall 0, precision 1)
  double auc = 0.0;             // trapezoid over recall
};

PrCurve pr_curve(std::span<const double> scores, std::span<const std::uint8_t> positive);

// Linear interpolation between order statistics: position q * (n - 1).
double quantile(std::vector<double> values, double q);

// Threshold = benign (1 - fpr) quantile; DR = share of adversarial > threshold.
double dr_at_fpr(std::span<const double> benign, std::span<const double> adversarial, double fpr);

// Share of values strictly above the threshold.
double rate_above(std::span<const double> values, double threshold);

struct TTestMap {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::optional<double>> t;  // absent where the pooled variance is zero

  std::size_t defined() const;
  double peak_abs() const;  // 0 if nothing is defined
};

// Each group is a list of samples; every sample has rows * cols cells.
TTestMap welch_t(const std::vector<std::vector<double>>& a,
                 const std::vector<std::vector<double>>& b, std::size_t rows,
                 std::size_t cols);

struct ConfusionMatrix {
  std::size_t n = 0;
  std::vector<std::size_t> counts;  // row = true class, column = predicted

  std::size_t at(std::size_t truth, std::size_t pred) const { return counts[truth * n + pred]; }
  std::size_t row_sum(std::size_t truth) const;
  std::size_t col_sum(std::size_t pred) const;
  std::size_t total() const;
};

ConfusionMatrix confusion_matrix(std::span<const std::size_t> preds,
                                 std::span<const std::size_t> labels, std::size_t n);

struct ClassMetrics {
  std::size_t support = 0;
  double precision = 0.0;
  double recall = 0.0;  // per-class accuracy
  double f1 = 0.0;
};

struct ClassReport {
  std::vector<ClassMetrics> classes;
  double accuracy = 0.0;
  ConfusionMatrix confusion;
};

ClassReport class_report(const ConfusionMatrix& cm);

}  // namespace emshep::evalkit
