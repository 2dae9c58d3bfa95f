// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

#include "emshep/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "emshep/errors.hpp"
#include "emshep/io.hpp"

namespace emshep::attacks {

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void check_finite(const std::vector<double>& g) {
  for (double v : g) {
    if (!std::isfinite(v)) throw NumericError("attack: non-finite input gradient");
  }
}

// Number of coordinates moved per L1 step.
std::size_t l1_support(std::size_t dim) {
  return std::max<std::size_t>(1, (dim + 19) / 20);
}

// Ascent direction for one step (already signed for targeted descent).
std::vector<double> step_direction(std::span<const double> g, std::span<const double> x,
                                   Norm p) {
  const std::size_t n = g.size();
  std::vector<double> d(n, 0.0);
  switch (p) {
    case Norm::kLinf:
      for (std::size_t i = 0; i < n; ++i) d[i] = sign(g[i]);
      break;
    case Norm::kL2: {
      double norm = 0.0;
      for (double v : g) norm += v * v;
      norm = std::sqrt(norm);
      if (norm > 0.0)
        for (std::size_t i = 0; i < n; ++i) d[i] = g[i] / norm;
      break;
    }
    case Norm::kL1: {
      // Steepest L1 ascent concentrated on the largest-gradient coordinates
      // that can still move inside [0, 1].
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < n; ++i) {
        if (g[i] > 0.0 && x[i] < 1.0) idx.push_back(i);
        if (g[i] < 0.0 && x[i] > 0.0) idx.push_back(i);
      }
      const std::size_t k = std::min(idx.size(), l1_support(n));
      std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                        [&](std::size_t a, std::size_t b) {
                          const double ga = std::abs(g[a]);
                          const double gb = std::abs(g[b]);
                          return ga != gb ? ga > gb : a < b;
                        });
      for (std::size_t j = 0; j < k; ++j) {
        d[idx[j]] = sign(g[idx[j]]) / static_cast<double>(k);
      }
      break;
    }
    case Norm::kL0:
      throw ConfigError("attack: L0 attacks are not supported");
  }
  return d;
}

}  // namespace

std::string_view norm_name(Norm p) {
  switch (p) {
    case Norm::kL0: return "l0";
    case Norm::kL1: return "l1";
    case Norm::kL2: return "l2";
    case Norm::kLinf: return "linf";
  }
  return "?";
}

Norm parse_norm(std::string_view s) {
  if (s == "l0" || s == "L0" || s == "0") return Norm::kL0;
  if (s == "l1" || s == "L1" || s == "1") return Norm::kL1;
  if (s == "l2" || s == "L2" || s == "2") return Norm::kL2;
  if (s == "linf" || s == "Linf" || s == "inf") return Norm::kLinf;
  throw ConfigError("unknown norm: " + std::string(s));
}

void AttackSpec::validate(std::optional<std::size_t> source) const {
  if (!(eps >= 0.0) || !std::isfinite(eps)) throw ConfigError("attack: eps must be >= 0");
  if (norm == Norm::kL0) throw ConfigError("attack: L0 budget is not supported");
  if (method == Method::kPgd) {
    if (steps < 1) throw ConfigError("attack: PGD needs at least one step");
    if (!(step_size > 0.0)) throw ConfigError("attack: step size must be > 0");
  }
  if (targeted) {
    if (!target) throw ConfigError("attack: targeted attack without target class");
    if (source && *source == *target) {
      throw ConfigError("attack: target class equals source label");
    }
  }
}

AttackSpec default_pgd(Norm norm, std::size_t steps) {
  AttackSpec s;
  s.method = Method::kPgd;
  s.norm = norm;
  switch (norm) {
    case Norm::kLinf: s.eps = 0.1; break;
    case Norm::kL2: s.eps = 1.0; break;
    case Norm::kL1: s.eps = 5.0; break;
    case Norm::kL0: throw ConfigError("attack: no default L0 budget");
  }
  s.steps = steps;
  s.step_size = s.eps / 10.0;
  return s;
}

double lp_distance(std::span<const double> x, std::span<const double> y, Norm p) {
  if (x.size() != y.size()) throw ShapeError("lp_distance: dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = std::abs(x[i] - y[i]);
    switch (p) {
      case Norm::kL0: acc += d != 0.0 ? 1.0 : 0.0; break;
      case Norm::kL1: acc += d; break;
      case Norm::kL2: acc += d * d; break;
      case Norm::kLinf: acc = std::max(acc, d); break;
    }
  }
  return p == Norm::kL2 ? std::sqrt(acc) : acc;
}

std::vector<double> project(std::span<const double> delta, Norm p, double eps) {
  std::vector<double> out(delta.begin(), delta.end());
  switch (p) {
    case Norm::kLinf:
      for (double& v : out) v = std::clamp(v, -eps, eps);
      return out;
    case Norm::kL2: {
      const double norm = lp_distance(delta, std::vector<double>(delta.size(), 0.0), Norm::kL2);
      if (norm > eps) {
        const double s = eps / norm;
        for (double& v : out) v *= s;
      }
      return out;
    }
    case Norm::kL1: {
      double l1 = 0.0;
      for (double v : out) l1 += std::abs(v);
      if (l1 <= eps) return out;
      if (eps <= 0.0) return std::vector<double>(out.size(), 0.0);
      // Soft-threshold at theta, where theta solves sum(max(|d| - theta, 0)) = eps
      // (sort-based simplex projection of |delta|).
      std::vector<double> mag(out.size());
      for (std::size_t i = 0; i < out.size(); ++i) mag[i] = std::abs(out[i]);
      std::sort(mag.begin(), mag.end(), std::greater<>());
      double cumsum = 0.0;
      double theta = 0.0;
      for (std::size_t j = 0; j < mag.size(); ++j) {
        cumsum += mag[j];
        const double t = (cumsum - eps) / static_cast<double>(j + 1);
        if (mag[j] - t > 0.0) theta = t;
      }
      for (double& v : out) v = sign(v) * std::max(std::abs(v) - theta, 0.0);
      return out;
    }
    case Norm::kL0:
      break;
  }
  throw ConfigError("project: unsupported norm");
}

AdversarialExample fgsm(const victim::VictimModel& model, std::span<const double> x,
                        std::size_t label, double eps) {
  if (!(eps >= 0.0)) throw ConfigError("fgsm: eps must be >= 0");
  std::vector<double> g;
  victim::input_gradient(model, x, label, g);
  check_finite(g);
  AdversarialExample ex;
  ex.original.assign(x.begin(), x.end());
  ex.perturbed.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    ex.perturbed[i] = std::clamp(x[i] + eps * sign(g[i]), 0.0, 1.0);
  }
  ex.source_label = label;
  ex.predicted_label = victim::predict(model, ex.perturbed).label;
  ex.norm = Norm::kLinf;
  ex.eps = eps;
  ex.distance = lp_distance(x, ex.perturbed, Norm::kLinf);
  return ex;
}

AdversarialExample pgd(const victim::VictimModel& model, std::span<const double> x,
                       std::size_t label, const AttackSpec& spec) {
  spec.validate(label);
  const std::size_t n = x.size();
  std::vector<double> cur(x.begin(), x.end());
  std::vector<double> g;
  std::vector<double> delta(n);
  for (std::size_t step = 0; step < spec.steps; ++step) {
    if (spec.targeted) {
      victim::input_gradient(model, cur, *spec.target, g);
      for (double& v : g) v = -v;
    } else {
      victim::input_gradient(model, cur, label, g);
    }
    check_finite(g);
    const std::vector<double> dir = step_direction(g, cur, spec.norm);
    for (std::size_t i = 0; i < n; ++i) delta[i] = cur[i] + spec.step_size * dir[i] - x[i];
    const std::vector<double> proj = project(delta, spec.norm, spec.eps);
    for (std::size_t i = 0; i < n; ++i) cur[i] = std::clamp(x[i] + proj[i], 0.0, 1.0);
  }
  AdversarialExample ex;
  ex.original.assign(x.begin(), x.end());
  ex.perturbed = std::move(cur);
  ex.source_label = label;
  ex.predicted_label = victim::predict(model, ex.perturbed).label;
  ex.norm = spec.norm;
  ex.eps = spec.eps;
  ex.distance = lp_distance(x, ex.perturbed, spec.norm);
  ex.target = spec.targeted ? spec.target : std::nullopt;
  return ex;
}

void export_adversarial_csv(const std::filesystem::path& path,
                            const std::vector<AdversarialExample>& batch,
                            std::uint64_t config_hash) {
  io::CsvWriter w(path);
  w.comment("config_hash=" + io::hex64(config_hash));
  std::vector<std::string> header{"source_label", "pred_label", "norm", "eps", "achieved_dist"};
  const std::size_t dim = batch.empty() ? 0 : batch.front().perturbed.size();
  for (std::size_t j = 0; j < dim; ++j) header.push_back("f" + std::to_string(j));
  w.row(header);
  for (const auto& ex : batch) {
    std::vector<std::string> row{std::to_string(ex.source_label),
                                 std::to_string(ex.predicted_label),
                                 std::string(norm_name(ex.norm)), io::format_double(ex.eps),
                                 io::format_double(ex.distance)};
    for (double v : ex.perturbed) row.push_back(io::format_double(v));
    w.row(row);
  }
  w.close();
}

std::vector<AdversarialExample> import_adversarial_csv(const std::filesystem::path& path,
                                                       std::uint64_t* config_hash) {
  const io::CsvTable t = io::read_csv(path);
  if (t.header.size() < 5 || t.header[0] != "source_label") {
    throw FormatError("adversarial CSV: unexpected header");
  }
  for (const auto& c : t.comments) {
    if (c.rfind("config_hash=", 0) == 0 && config_hash) {
      *config_hash = io::parse_hex64(c.substr(12));
    }
  }
  std::vector<AdversarialExample> out;
  const std::size_t dim = t.header.size() - 5;
  for (const auto& row : t.rows) {
    AdversarialExample ex;
    ex.source_label = static_cast<std::size_t>(io::parse_int(row[0]));
    ex.predicted_label = static_cast<std::size_t>(io::parse_int(row[1]));
    ex.norm = parse_norm(row[2]);
    ex.eps = io::parse_double(row[3]);
    ex.distance = io::parse_double(row[4]);
    ex.perturbed.resize(dim);
    for (std::size_t j = 0; j < dim; ++j) ex.perturbed[j] = io::parse_double(row[5 + j]);
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace emshep::attacks
