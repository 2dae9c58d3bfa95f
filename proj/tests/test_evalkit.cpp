// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>

#include "emshep/errors.hpp"
#include "emshep/evalkit.hpp"
#include "oracles.hpp"

using namespace emshep;
namespace ek = emshep::evalkit;

TEST_CASE("f1 spot values and shape") {
  CHECK(ek::f1(1, 0, 0) == 1.0);
  CHECK(ek::f1(100, 10, 10) == doctest::Approx(100.0 / 110.0));
  CHECK(std::abs(ek::f1(100, 10, 10) - 0.9091) < 1e-4);
  CHECK(ek::f1(0, 5, 5) == 0.0);
  CHECK_THROWS_AS(ek::f1(0, 0, 0), ConfigError);
  for (std::size_t fp = 0; fp < 10; ++fp) {
    for (std::size_t fn = 0; fn < 10; ++fn) {
      CHECK(ek::f1(20, fp, fn) == ek::f1(20, fn, fp));
      CHECK(ek::f1(20, fp + 1, fn) < ek::f1(20, fp, fn));
    }
  }
}

TEST_CASE("pr_curve: closed cases") {
  const std::vector<double> s{0.1, 0.2, 0.8, 0.9};
  const std::vector<std::uint8_t> y{0, 0, 1, 1};
  CHECK(ek::pr_curve(s, y).auc == doctest::Approx(1.0));

  const std::vector<double> flat(10, 0.5);
  const std::vector<std::uint8_t> y3{1, 1, 1, 0, 0, 0, 0, 0, 0, 0};
  const auto c = ek::pr_curve(flat, y3);
  CHECK(c.points.back().recall == 1.0);
  CHECK(c.points.back().precision == doctest::Approx(0.3));

  CHECK_THROWS_AS(ek::pr_curve(s, std::vector<std::uint8_t>(4, 1)), ConfigError);
}

TEST_CASE("pr_curve AUC equals the exhaustive-threshold oracle") {
  std::mt19937_64 g(51);
  std::uniform_real_distribution<double> u(0, 1);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> s(200);
    std::vector<std::uint8_t> y(200);
    for (std::size_t i = 0; i < 200; ++i) {
      y[i] = u(g) < 0.4;
      // Rounded so that ties occur.
      s[i] = std::round((u(g) + 0.3 * y[i]) * 50) / 50;
    }
    const auto c = ek::pr_curve(s, y);
    CHECK(std::abs(c.auc - oracle::pr_auc(s, y)) <= 1e-9);
    for (std::size_t k = 1; k < c.points.size(); ++k) CHECK(c.points[k].recall >= c.points[k - 1].recall);
    CHECK((c.auc >= 0.0 && c.auc <= 1.0));

    // Invariant under strictly monotone transforms.
    std::vector<double> t(s);
    for (double& v : t) v = std::exp(3 * v) - 7;
    CHECK(ek::pr_curve(t, y).auc == doctest::Approx(c.auc).epsilon(1e-12));
  }
}

TEST_CASE("quantile and dr_at_fpr") {
  std::vector<double> v(100);
  for (int i = 0; i < 100; ++i) v[i] = i + 1;
  CHECK(ek::quantile(v, 0.9) == doctest::Approx(90.1));
  CHECK(ek::quantile(v, 0.5) == doctest::Approx(50.5));

  const std::vector<double> benign{1, 2, 3, 4, 5};
  const std::vector<double> adv{10, 11, 12};
  for (double f : {0.01, 0.1, 0.5}) CHECK(ek::dr_at_fpr(benign, adv, f) == 1.0);
  CHECK_THROWS_AS(ek::dr_at_fpr({}, adv, 0.1), ConfigError);

  // Same distribution: DR tracks the allowed FPR.
  std::mt19937_64 g(52);
  std::normal_distribution<double> n(0, 1);
  std::vector<double> a(10000), b(10000);
  for (auto& x : a) x = n(g);
  for (auto& x : b) x = n(g);
  CHECK(std::abs(ek::dr_at_fpr(a, b, 0.1) - 0.1) < 0.015);

  double prev = 0;
  for (double f = 0.05; f < 0.95; f += 0.05) {
    const double dr = ek::dr_at_fpr(a, b, f);
    CHECK(dr >= prev);
    prev = dr;
  }
}

TEST_CASE("welch t") {
  const std::vector<std::vector<double>> a{{1}, {2}, {3}};
  const std::vector<std::vector<double>> b{{4}, {5}, {6}};
  const auto m = ek::welch_t(a, b, 1, 1);
  REQUIRE(m.t[0].has_value());
  CHECK(std::abs(*m.t[0] - (-3.6742)) < 1e-4);
  CHECK(std::abs(m.peak_abs() - 3.6742) < 1e-4);
  CHECK(*m.t[0] == doctest::Approx(oracle::welch({1, 2, 3}, {4, 5, 6})).epsilon(1e-12));
  // Antisymmetric.
  CHECK(*ek::welch_t(b, a, 1, 1).t[0] == -*m.t[0]);

  // Identical groups with internal variance.
  CHECK(*ek::welch_t(a, a, 1, 1).t[0] == 0.0);

  // Zero variance: cell absent, not NaN.
  const std::vector<std::vector<double>> c{{1, 2}, {1, 3}};
  const std::vector<std::vector<double>> d{{1, 5}, {1, 6}};
  const auto z = ek::welch_t(c, d, 1, 2);
  CHECK_FALSE(z.t[0].has_value());
  CHECK(z.t[1].has_value());
  CHECK(z.defined() == 1);

  CHECK_THROWS_AS(ek::welch_t({{1}}, b, 1, 1), ConfigError);
}

TEST_CASE("confusion matrix against pair counting") {
  std::mt19937_64 g(53);
  std::uniform_int_distribution<std::size_t> c(0, 4);
  std::vector<std::size_t> p(300), l(300);
  for (std::size_t i = 0; i < 300; ++i) p[i] = c(g), l[i] = c(g);
  const auto cm = ek::confusion_matrix(p, l, 5);
  for (std::size_t t = 0; t < 5; ++t) {
    std::size_t support = 0;
    for (std::size_t q = 0; q < 5; ++q) {
      std::size_t n = 0;
      for (std::size_t i = 0; i < 300; ++i) n += (l[i] == t && p[i] == q);
      CHECK(cm.at(t, q) == n);
    }
    for (std::size_t i = 0; i < 300; ++i) support += l[i] == t;
    CHECK(cm.row_sum(t) == support);
  }
  CHECK(cm.total() == 300);

  const auto perfect = ek::confusion_matrix(l, l, 5);
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t q = 0; q < 5; ++q)
      if (t != q) CHECK(perfect.at(t, q) == 0);
  CHECK_THROWS_AS(ek::confusion_matrix(std::vector<std::size_t>{5}, std::vector<std::size_t>{0}, 5), ConfigError);
}

TEST_CASE("class report") {
  const std::vector<std::size_t> l{0, 0, 1, 1, 2, 2};
  const auto perfect = ek::class_report(ek::confusion_matrix(l, l, 3));
  for (const auto& c : perfect.classes) CHECK(c.f1 == 1.0);
  CHECK(perfect.accuracy == 1.0);

  const std::vector<std::size_t> constant(6, 1);
  const auto r = ek::class_report(ek::confusion_matrix(constant, l, 3));
  CHECK(r.classes[1].recall == 1.0);
  CHECK(r.classes[0].recall == 0.0);
  CHECK(r.classes[2].recall == 0.0);
  CHECK(r.classes[1].precision == doctest::Approx(1.0 / 3.0));
  CHECK(r.accuracy == doctest::Approx(1.0 / 3.0));
}
