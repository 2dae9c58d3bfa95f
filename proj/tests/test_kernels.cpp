// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "emshep/kernels/kernels.hpp"
#include "oracles.hpp"

namespace k = emshep::kernels;

namespace {

bool close(double a, double b, double tol = 1e-12) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

TEST_CASE("every available backend agrees with straight loops") {
  std::mt19937_64 g(11);
  for (k::Backend be : {k::Backend::kScalar, k::Backend::kAvx2, k::Backend::kNeon}) {
    if (!k::backend_available(be)) continue;
    CAPTURE(k::backend_name(be));
    const k::KernelTable& t = k::table(be);
    for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 17u, 64u, 257u}) {
      CAPTURE(n);
      const auto a = oracle::uniform_vec(g, n, -2, 2);
      const auto b = oracle::uniform_vec(g, n, -2, 2);

      double dot = 0, ss = 0;
      for (std::size_t i = 0; i < n; ++i) {
        dot += a[i] * b[i];
        ss += a[i] * a[i];
      }
      CHECK(close(t.dot(a.data(), b.data(), n), dot));
      CHECK(close(t.sum_squares(a.data(), n), ss));

      std::vector<double> y = b;
      t.axpy(0.7, a.data(), y.data(), n);
      std::vector<double> m(n), r(n);
      t.mul(a.data(), b.data(), m.data(), n);
      t.relu(a.data(), r.data(), n);
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(close(y[i], b[i] + 0.7 * a[i]));
        CHECK(m[i] == a[i] * b[i]);
        CHECK(r[i] == std::max(a[i], 0.0));
      }

      const auto z = oracle::uniform_vec(g, 2 * n, -1, 1);
      std::vector<double> mag(n);
      t.complex_abs(z.data(), mag.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(close(mag[i], std::hypot(z[2 * i], z[2 * i + 1])));
    }
  }
}

TEST_CASE("matrix helpers match the definition") {
  std::mt19937_64 g(12);
  const std::size_t rows = 5, cols = 9;
  const auto w = oracle::uniform_vec(g, rows * cols, -1, 1);
  const auto x = oracle::uniform_vec(g, cols, -1, 1);
  const auto b = oracle::uniform_vec(g, rows, -1, 1);
  const auto gr = oracle::uniform_vec(g, rows, -1, 1);

  std::vector<double> y(rows);
  k::matvec_bias(w, rows, cols, x, b, y);
  std::vector<double> xt(cols, 0.5);
  k::matvec_transposed_acc(w, rows, cols, gr, xt);
  std::vector<double> outer(rows * cols, 1.0);
  k::outer_acc(outer, rows, cols, gr, x);

  for (std::size_t r = 0; r < rows; ++r) {
    double s = b[r];
    for (std::size_t c = 0; c < cols; ++c) s += w[r * cols + c] * x[c];
    CHECK(close(y[r], s));
    for (std::size_t c = 0; c < cols; ++c) CHECK(close(outer[r * cols + c], 1.0 + gr[r] * x[c]));
  }
  for (std::size_t c = 0; c < cols; ++c) {
    double s = 0.5;
    for (std::size_t r = 0; r < rows; ++r) s += w[r * cols + c] * gr[r];
    CHECK(close(xt[c], s));
  }
}

TEST_CASE("backend selection") {
  const k::Backend before = k::active_backend();
  CHECK(k::backend_available(k::Backend::kScalar));
  CHECK(k::set_backend(k::Backend::kScalar));
  CHECK(k::active_backend() == k::Backend::kScalar);
  CHECK(k::set_backend(before));
  CHECK(k::backend_available(k::detect_backend()));
}
