// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>

#include "emshep/attacks.hpp"
#include "emshep/errors.hpp"
#include "emshep/io.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace emshep;
using attacks::Norm;

namespace {

const victim::VictimModel& trained_victim() {
  static const victim::VictimModel m = victim::train_victim(victim::gen_dataset({}), {});
  return m;
}

double norm_of(const std::vector<double>& v, Norm p) {
  return attacks::lp_distance(v, std::vector<double>(v.size(), 0.0), p);
}

}  // namespace

TEST_CASE("lp_distance spot values") {
  const std::vector<double> x(8, 0.25);
  for (Norm p : {Norm::kL0, Norm::kL1, Norm::kL2, Norm::kLinf}) CHECK(attacks::lp_distance(x, x, p) == 0.0);
  auto y = x;
  y[5] = 0.5;
  CHECK(attacks::lp_distance(x, y, Norm::kL0) == 1.0);
  std::vector<double> a(8, 0.0), b(8, 0.0);
  b[0] = 3;
  b[1] = 4;
  CHECK(attacks::lp_distance(a, b, Norm::kL2) == 5.0);
  CHECK(attacks::lp_distance(a, b, Norm::kL1) == 7.0);
  CHECK(attacks::lp_distance(a, b, Norm::kLinf) == 4.0);
  CHECK_THROWS_AS(attacks::lp_distance(a, std::vector<double>(3), Norm::kL2), ShapeError);
}

TEST_CASE("project: interior points are unchanged, Linf clips") {
  const std::vector<double> d{0.1, -0.05, 0.02};
  for (Norm p : {Norm::kL1, Norm::kL2, Norm::kLinf}) CHECK(attacks::project(d, p, 1.0) == d);
  const auto c = attacks::project(std::vector<double>{0.5, -0.2}, Norm::kLinf, 0.3);
  CHECK(c[0] == doctest::Approx(0.3));
  CHECK(c[1] == doctest::Approx(-0.2));
}

TEST_CASE("project: L1 matches the bisection oracle") {
  std::mt19937_64 g(21);
  for (int i = 0; i < 500; ++i) {
    const auto d = oracle::uniform_vec(g, 8, -1, 1);
    const double eps = 0.1 + 0.3 * (i % 7);
    if (norm_of(d, Norm::kL1) <= eps) continue;
    const auto got = attacks::project(d, Norm::kL1, eps);
    const auto ref = oracle::project_l1(d, eps);
    for (std::size_t k = 0; k < d.size(); ++k) CHECK(std::abs(got[k] - ref[k]) <= 1e-4);
    CHECK(norm_of(got, Norm::kL1) == doctest::Approx(eps).epsilon(1e-9));
  }
}

TEST_CASE("project is idempotent") {
  std::mt19937_64 g(22);
  for (int i = 0; i < 300; ++i) {
    const auto d = oracle::uniform_vec(g, 16, -2, 2);
    for (Norm p : {Norm::kL1, Norm::kL2, Norm::kLinf}) {
      const auto once = attacks::project(d, p, 0.7);
      const auto twice = attacks::project(once, p, 0.7);
      for (std::size_t k = 0; k < d.size(); ++k) CHECK(std::abs(once[k] - twice[k]) <= 1e-9);
    }
  }
}

TEST_CASE("fgsm: zero budget and sign step") {
  const auto& m = trained_victim();
  const auto d = victim::gen_dataset({});
  const auto& x = d.inputs[7];
  const auto zero = attacks::fgsm(m, x, d.labels[7], 0.0);
  CHECK(zero.perturbed == x);

  std::vector<double> grad;
  victim::input_gradient(m, x, d.labels[7], grad);
  const auto ex = attacks::fgsm(m, x, d.labels[7], 0.05);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (grad[i] == 0.0) continue;
    const double want = std::clamp(x[i] + 0.05 * (grad[i] > 0 ? 1.0 : -1.0), 0.0, 1.0);
    CHECK(ex.perturbed[i] == want);
  }
}

TEST_CASE("fgsm on a linear two-class victim matches the hand-computed step") {
  // logits = W x + b with known W; dJ/dx = W^T (softmax - onehot).
  auto m = victim::make_victim({3, 2}, 1);
  m.net.layer(0).w = {1.0, -2.0, 0.5, -1.0, 1.0, 0.0};
  m.net.layer(0).b = {0.0, 0.0};
  const std::vector<double> x{0.5, 0.5, 0.5};
  const double z0 = 0.5 - 1.0 + 0.25, z1 = -0.5 + 0.5;
  const double p0 = std::exp(z0) / (std::exp(z0) + std::exp(z1));
  // true label 0: g = (p0 - 1) * W0 + p1 * W1
  const double g[3] = {(p0 - 1) * 1.0 + (1 - p0) * -1.0, (p0 - 1) * -2.0 + (1 - p0) * 1.0,
                       (p0 - 1) * 0.5};
  const auto ex = attacks::fgsm(m, x, 0, 0.1);
  for (int i = 0; i < 3; ++i) CHECK(ex.perturbed[i] == doctest::Approx(0.5 + 0.1 * (g[i] > 0 ? 1 : -1)));

  // Doubling eps never lowers the true-class loss on a linear model.
  const double l1 = nn::cross_entropy(victim::logits(m, ex.perturbed), 0);
  const double l2 = nn::cross_entropy(victim::logits(m, attacks::fgsm(m, x, 0, 0.2).perturbed), 0);
  CHECK(l2 >= l1);
}

TEST_CASE("pgd: one untargeted Linf step with alpha >= eps equals fgsm") {
  const auto& m = trained_victim();
  const auto d = victim::gen_dataset({});
  for (std::size_t i = 0; i < 50; ++i) {
    attacks::AttackSpec s;
    s.norm = Norm::kLinf;
    s.eps = 0.08;
    s.steps = 1;
    s.step_size = 0.1;
    const auto a = attacks::pgd(m, d.inputs[i], d.labels[i], s);
    const auto b = attacks::fgsm(m, d.inputs[i], d.labels[i], 0.08);
    CHECK(a.perturbed == b.perturbed);
  }
}

TEST_CASE("pgd: zero budget returns the input") {
  const auto& m = trained_victim();
  const auto d = victim::gen_dataset({});
  for (Norm p : {Norm::kL1, Norm::kL2, Norm::kLinf}) {
    auto s = attacks::default_pgd(p, 5);
    s.eps = 0.0;
    CHECK(attacks::pgd(m, d.inputs[3], d.labels[3], s).perturbed == d.inputs[3]);
  }
}

TEST_CASE("pgd budgets hold over 1000 random runs per norm") {
  const auto& m = trained_victim();
  std::mt19937_64 g(23);
  std::uniform_int_distribution<std::size_t> cls(0, 9);
  for (Norm p : {Norm::kL1, Norm::kL2, Norm::kLinf}) {
    CAPTURE(attacks::norm_name(p));
    const auto base = attacks::default_pgd(p, 5);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const auto x = oracle::uniform_vec(g, 64, 0, 1);
      auto s = base;
      const std::size_t y = cls(g);
      if (i % 2) {
        s.targeted = true;
        s.target = (y + 1 + cls(g) % 9) % 10;
      }
      const auto ex = attacks::pgd(m, x, y, s);
      worst = std::max(worst, attacks::lp_distance(x, ex.perturbed, p) - s.eps);
      for (double v : ex.perturbed) REQUIRE((v >= 0.0 && v <= 1.0));
      REQUIRE(ex.distance <= s.eps + 1e-6);
    }
    CHECK(worst <= 1e-6);
  }
}

TEST_CASE("untargeted PGD succeeds on the trained victim") {
  const auto& m = trained_victim();
  const auto d = victim::gen_dataset({});
  const auto test = d.indices(victim::Split::kTest);
  std::size_t hit = 0;
  for (std::size_t k = 0; k < 200; ++k) {
    const std::size_t i = test[k];
    hit += attacks::pgd(m, d.inputs[i], d.labels[i], attacks::default_pgd(Norm::kLinf)).misclassified();
  }
  CHECK(static_cast<double>(hit) / 200.0 >= 0.80);
}

TEST_CASE("attack spec validation") {
  attacks::AttackSpec s;
  s.eps = -1;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = {};
  s.steps = 0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = {};
  s.targeted = true;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.target = 3;
  CHECK_THROWS_AS(s.validate(3), ConfigError);
  CHECK_NOTHROW(s.validate(2));
  CHECK_THROWS_AS(attacks::default_pgd(Norm::kL0), ConfigError);
  CHECK(attacks::default_pgd(Norm::kL2).eps == 1.0);
  CHECK(attacks::default_pgd(Norm::kL1).eps == 5.0);
  CHECK(attacks::default_pgd(Norm::kLinf).step_size == doctest::Approx(0.01));
}

TEST_CASE("adversarial CSV round-trip") {
  const auto& m = trained_victim();
  const auto d = victim::gen_dataset({});
  std::vector<attacks::AdversarialExample> batch;
  for (std::size_t i = 0; i < 5; ++i)
    batch.push_back(attacks::pgd(m, d.inputs[i], d.labels[i], attacks::default_pgd(Norm::kL2, 3)));
  const test::TempDir dir;
  attacks::export_adversarial_csv(dir.path() / "a.csv", batch, 9);
  const auto t = io::read_csv(dir.path() / "a.csv");
  REQUIRE(t.header.size() == 5 + 64);
  CHECK(t.header[0] == "source_label");
  CHECK(t.header[4] == "achieved_dist");
  CHECK(t.header[5] == "f0");
  std::uint64_t h = 0;
  const auto back = attacks::import_adversarial_csv(dir.path() / "a.csv", &h);
  CHECK(h == 9);
  REQUIRE(back.size() == batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    CHECK(back[i].perturbed == batch[i].perturbed);
    CHECK(back[i].source_label == batch[i].source_label);
    CHECK(back[i].predicted_label == batch[i].predicted_label);
    CHECK(back[i].norm == Norm::kL2);
    CHECK(back[i].distance == batch[i].distance);
  }
}
