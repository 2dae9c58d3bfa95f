// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

#include "emshep/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "emshep/errors.hpp"

namespace emshep::evalkit {

double f1(std::size_t tp, std::size_t fp, std::size_t fn) {
  if (tp + fp + fn == 0) throw ConfigError("f1: all counts are zero");
  return static_cast<double>(tp) /
         (static_cast<double>(tp) + 0.5 * static_cast<double>(fp + fn));
}

PrCurve pr_curve(std::span<const double> scores, std::span<const std::uint8_t> positive) {
  if (scores.size() != positive.size()) throw ShapeError("pr_curve: length mismatch");
  const std::size_t total_pos =
      static_cast<std::size_t>(std::count_if(positive.begin(), positive.end(),
                                             [](std::uint8_t v) { return v != 0; }));
  if (total_pos == 0 || total_pos == scores.size()) {
    throw ConfigError("pr_curve: need both benign and adversarial samples");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  PrCurve c;
  c.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 1.0});
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double thr = scores[order[i]];
    while (i < order.size() && scores[order[i]] == thr) {
      (positive[order[i]] ? tp : fp) += 1;
      ++i;
    }
    PrPoint p;
    p.threshold = thr;
    p.recall = static_cast<double>(tp) / static_cast<double>(total_pos);
    p.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    c.points.push_back(p);
  }
  for (std::size_t k = 1; k < c.points.size(); ++k) {
    const auto& a = c.points[k - 1];
    const auto& b = c.points[k];
    c.auc += (b.recall - a.recall) * 0.5 * (a.precision + b.precision);
  }
  return c;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ConfigError("quantile: empty input");
  if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("quantile: q must be in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

double rate_above(std::span<const double> values, double threshold) {
  if (values.empty()) throw ConfigError("rate_above: empty input");
  const auto n = std::count_if(values.begin(), values.end(),
                               [&](double v) { return v > threshold; });
  return static_cast<double>(n) / static_cast<double>(values.size());
}

double dr_at_fpr(std::span<const double> benign, std::span<const double> adversarial,
                 double fpr) {
  if (benign.empty() || adversarial.empty()) throw ConfigError("dr_at_fpr: empty input");
  if (!(fpr > 0.0 && fpr < 1.0)) throw ConfigError("dr_at_fpr: fpr must be in (0, 1)");
  const double thr = quantile({benign.begin(), benign.end()}, 1.0 - fpr);
  return rate_above(adversarial, thr);
}

std::size_t TTestMap::defined() const {
  return static_cast<std::size_t>(
      std::count_if(t.begin(), t.end(), [](const auto& v) { return v.has_value(); }));
}

double TTestMap::peak_abs() const {
  double peak = 0.0;
  for (const auto& v : t)
    if (v) peak = std::max(peak, std::abs(*v));
  return peak;
}

TTestMap welch_t(const std::vector<std::vector<double>>& a,
                 const std::vector<std::vector<double>>& b, std::size_t rows,
                 std::size_t cols) {
  if (a.size() < 2 || b.size() < 2) throw ConfigError("welch_t: need >= 2 samples per group");
  const std::size_t cells = rows * cols;
  for (const auto* g : {&a, &b})
    for (const auto& s : *g)
      if (s.size() != cells) throw ShapeError("welch_t: sample size != rows * cols");

  auto moments = [cells](const std::vector<std::vector<double>>& g, std::vector<double>& mean,
                         std::vector<double>& var) {
    mean.assign(cells, 0.0);
    var.assign(cells, 0.0);
    for (const auto& s : g)
      for (std::size_t j = 0; j < cells; ++j) mean[j] += s[j];
    for (double& m : mean) m /= static_cast<double>(g.size());
    for (const auto& s : g)
      for (std::size_t j = 0; j < cells; ++j) {
        const double d = s[j] - mean[j];
        var[j] += d * d;
      }
    for (double& v : var) v /= static_cast<double>(g.size() - 1);
  };
  std::vector<double> ma, va, mb, vb;
  moments(a, ma, va);
  moments(b, mb, vb);

  TTestMap m;
  m.rows = rows;
  m.cols = cols;
  m.t.resize(cells);
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  for (std::size_t j = 0; j < cells; ++j) {
    const double se2 = va[j] / na + vb[j] / nb;
    if (se2 > 0.0) m.t[j] = (ma[j] - mb[j]) / std::sqrt(se2);
  }
  return m;
}

std::size_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::size_t s = 0;
  for (std::size_t p = 0; p < n; ++p) s += at(truth, p);
  return s;
}

std::size_t ConfusionMatrix::col_sum(std::size_t pred) const {
  std::size_t s = 0;
  for (std::size_t t = 0; t < n; ++t) s += at(t, pred);
  return s;
}

std::size_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

ConfusionMatrix confusion_matrix(std::span<const std::size_t> preds,
                                 std::span<const std::size_t> labels, std::size_t n) {
  if (preds.size() != labels.size()) throw ShapeError("confusion_matrix: length mismatch");
  ConfusionMatrix cm;
  cm.n = n;
  cm.counts.assign(n * n, 0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] >= n || labels[i] >= n) throw ConfigError("confusion_matrix: label out of range");
    ++cm.counts[labels[i] * n + preds[i]];
  }
  return cm;
}

ClassReport class_report(const ConfusionMatrix& cm) {
  ClassReport r;
  r.confusion = cm;
  std::size_t correct = 0;
  for (std::size_t c = 0; c < cm.n; ++c) {
    const std::size_t tp = cm.at(c, c);
    const std::size_t support = cm.row_sum(c);
    const std::size_t predicted = cm.col_sum(c);
    ClassMetrics m;
    m.support = support;
    m.recall = support ? static_cast<double>(tp) / static_cast<double>(support) : 0.0;
    m.precision = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
    const std::size_t fp = predicted - tp;
    const std::size_t fn = support - tp;
    m.f1 = (tp + fp + fn) ? f1(tp, fp, fn) : 0.0;
    r.classes.push_back(m);
    correct += tp;
  }
  const std::size_t total = cm.total();
  r.accuracy = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  return r;
}

}  // namespace emshep::evalkit
