// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

#include <arm_neon.h>

#include "kernels_impl.hpp"

namespace emshep::kernels::neon {

double dot(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double s = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

double sum_squares(const double* a, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float64x2_t v0 = vld1q_f64(a + i);
    const float64x2_t v1 = vld1q_f64(a + i + 2);
    acc0 = vfmaq_f64(acc0, v0, v0);
    acc1 = vfmaq_f64(acc1, v1, v1);
  }
  double s = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) s += a[i] * a[i];
  return s;
}

void complex_abs(const double* z, double* out, std::size_t n) {
  std::size_t k = 0;
  for (; k + 2 <= n; k += 2) {
    // de-interleave two complex values into (re0, re1), (im0, im1)
    const float64x2x2_t p = vld2q_f64(z + 2 * k);
    const float64x2_t m2 =
        vfmaq_f64(vmulq_f64(p.val[0], p.val[0]), p.val[1], p.val[1]);
    vst1q_f64(out + k, vsqrtq_f64(m2));
  }
  for (; k < n; ++k) {
    const double re = z[2 * k];
    const double im = z[2 * k + 1];
    out[k] = vget_lane_f64(vsqrt_f64(vdup_n_f64(re * re + im * im)), 0);
  }
}

void relu(const double* in, double* out, std::size_t n) {
  const float64x2_t zero = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(out + i, vmaxq_f64(vld1q_f64(in + i), zero));
  }
  for (; i < n; ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
}

}  // namespace emshep::kernels::neon
