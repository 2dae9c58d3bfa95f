// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

// Built with -mavx2 -mfma; only reached through the dispatcher after a CPU
// feature check.

#include <immintrin.h>

#include "kernels_impl.hpp"

namespace emshep::kernels::avx2 {

namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

}  // namespace

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4),
                           _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i,
                     _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

double sum_squares(const double* a, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256d v0 = _mm256_loadu_pd(a + i);
    const __m256d v1 = _mm256_loadu_pd(a + i + 4);
    acc0 = _mm256_fmadd_pd(v0, v0, acc0);
    acc1 = _mm256_fmadd_pd(v1, v1, acc1);
  }
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(a + i);
    acc0 = _mm256_fmadd_pd(v, v, acc0);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * a[i];
  return s;
}

void complex_abs(const double* z, double* out, std::size_t n) {
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    // z[2k .. 2k+7] = re0 im0 re1 im1 | re2 im2 re3 im3
    const __m256d p0 = _mm256_loadu_pd(z + 2 * k);
    const __m256d p1 = _mm256_loadu_pd(z + 2 * k + 4);
    const __m256d s0 = _mm256_mul_pd(p0, p0);
    const __m256d s1 = _mm256_mul_pd(p1, p1);
    // hadd -> (r0+i0, r2+i2, r1+i1, r3+i3)
    __m256d h = _mm256_hadd_pd(s0, s1);
    h = _mm256_permute4x64_pd(h, 0xD8);
    _mm256_storeu_pd(out + k, _mm256_sqrt_pd(h));
  }
  for (; k < n; ++k) {
    const double re = z[2 * k];
    const double im = z[2 * k + 1];
    const double m2 = re * re + im * im;
    _mm_store_sd(out + k, _mm_sqrt_sd(_mm_setzero_pd(), _mm_set_sd(m2)));
  }
}

void relu(const double* in, double* out, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_max_pd(_mm256_loadu_pd(in + i), zero));
  }
  for (; i < n; ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
}

}  // namespace emshep::kernels::avx2
