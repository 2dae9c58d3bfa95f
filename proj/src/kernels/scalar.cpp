// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "kernels_impl.hpp"

namespace emshep::kernels::scalar {

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

double sum_squares(const double* a, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * a[i];
  return s;
}

void complex_abs(const double* z, double* out, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) {
    const double re = z[2 * k];
    const double im = z[2 * k + 1];
    out[k] = std::sqrt(re * re + im * im);
  }
}

void relu(const double* in, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
}

}  // namespace emshep::kernels::scalar
