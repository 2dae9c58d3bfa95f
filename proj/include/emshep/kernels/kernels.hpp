// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

// Data-parallel inner loops shared by the dense networks, the trace
// simulator and the spectral front end.
//
// Every kernel has a scalar reference implementation and, where the target
// supports it, an AVX2+FMA (x86-64) or NEON (aarch64) variant.  The variant
// is picked once at startup from the running CPU; EMSHEP_SIMD=scalar in the
// environment, or set_backend(), forces a specific one.  Vector variants
// reassociate sums, so results agree with the reference to rounding only.

#pragma once

#include <cstddef>
#include <span>
#include <string_view>

namespace emshep::kernels {

enum class Backend { kScalar, kAvx2, kNeon };

std::string_view backend_name(Backend b);

// Best backend the running CPU supports.
Backend detect_backend();

Backend active_backend();

// Returns false (and leaves the active backend unchanged) if the CPU or the
// build does not support the requested backend.
bool set_backend(Backend b);

bool backend_available(Backend b);

// Function table for one backend.  Lengths are element counts; matrices are
// row-major, `rows x cols`.
struct KernelTable {
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // out[i] = a[i] * b[i]
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  double (*sum_squares)(const double* a, std::size_t n);
  // out[k] = |re[k] + i*im[k]| for interleaved (re, im) pairs
  void (*complex_abs)(const double* interleaved, double* out, std::size_t n);
  // out[i] = max(in[i], 0)
  void (*relu)(const double* in, double* out, std::size_t n);
};

const KernelTable& table(Backend b);
const KernelTable& active();

// Convenience wrappers over the active table.

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  active().axpy(a, x.data(), y.data(), x.size());
}

inline double sum_squares(std::span<const double> a) {
  return active().sum_squares(a.data(), a.size());
}

// y = W x + b
void matvec_bias(std::span<const double> w, std::size_t rows, std::size_t cols,
                 std::span<const double> x, std::span<const double> b,
                 std::span<double> y);

// out += W^T g
void matvec_transposed_acc(std::span<const double> w, std::size_t rows,
                           std::size_t cols, std::span<const double> g,
                           std::span<double> out);

// G += g x^T
void outer_acc(std::span<double> grad, std::size_t rows, std::size_t cols,
               std::span<const double> g, std::span<const double> x);

}  // namespace emshep::kernels
