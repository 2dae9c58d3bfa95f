// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

// Per-backend entry points.  This header is included by translation units
// compiled with ISA-specific flags, so it must not pull in any library
// header that defines inline functions.

#pragma once

#include <cstddef>

#define EMSHEP_DECLARE_KERNELS                                            \
  double dot(const double* a, const double* b, std::size_t n);            \
  void axpy(double a, const double* x, double* y, std::size_t n);         \
  void mul(const double* a, const double* b, double* out, std::size_t n); \
  double sum_squares(const double* a, std::size_t n);                     \
  void complex_abs(const double* z, double* out, std::size_t n);          \
  void relu(const double* in, double* out, std::size_t n);

namespace emshep::kernels {
namespace scalar {
EMSHEP_DECLARE_KERNELS
}
namespace avx2 {
EMSHEP_DECLARE_KERNELS
}
namespace neon {
EMSHEP_DECLARE_KERNELS
}
}  // namespace emshep::kernels

#undef EMSHEP_DECLARE_KERNELS
