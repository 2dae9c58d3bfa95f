// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <cassert>
#include <cstdlib>
#include <string>

#include "emshep/kernels/kernels.hpp"
#include "kernels_impl.hpp"

namespace emshep::kernels {

namespace {

#define EMSHEP_TABLE(ns) \
  KernelTable { ns::dot, ns::axpy, ns::mul, ns::sum_squares, ns::complex_abs, ns::relu }

const KernelTable kScalarTable = EMSHEP_TABLE(scalar);
#if defined(EMSHEP_HAVE_AVX2)
const KernelTable kAvx2Table = EMSHEP_TABLE(avx2);
#endif
#if defined(EMSHEP_HAVE_NEON)
const KernelTable kNeonTable = EMSHEP_TABLE(neon);
#endif

#undef EMSHEP_TABLE

bool cpu_has_avx2() {
#if defined(EMSHEP_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend initial_backend() {
  if (const char* env = std::getenv("EMSHEP_SIMD")) {
    const std::string want(env);
    if (want == "scalar") return Backend::kScalar;
    if (want == "avx2" && backend_available(Backend::kAvx2)) return Backend::kAvx2;
    if (want == "neon" && backend_available(Backend::kNeon)) return Backend::kNeon;
  }
  return detect_backend();
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{&table(initial_backend())};
  return slot;
}

std::atomic<Backend>& active_id() {
  static std::atomic<Backend> id{initial_backend()};
  return id;
}

}  // namespace

std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::kScalar: return "scalar";
    case Backend::kAvx2: return "avx2";
    case Backend::kNeon: return "neon";
  }
  return "unknown";
}

bool backend_available(Backend b) {
  switch (b) {
    case Backend::kScalar: return true;
    case Backend::kAvx2: return cpu_has_avx2();
    case Backend::kNeon:
#if defined(EMSHEP_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Backend detect_backend() {
  if (backend_available(Backend::kAvx2)) return Backend::kAvx2;
  if (backend_available(Backend::kNeon)) return Backend::kNeon;
  return Backend::kScalar;
}

const KernelTable& table(Backend b) {
  switch (b) {
#if defined(EMSHEP_HAVE_AVX2)
    case Backend::kAvx2: return kAvx2Table;
#endif
#if defined(EMSHEP_HAVE_NEON)
    case Backend::kNeon: return kNeonTable;
#endif
    default: return kScalarTable;
  }
}

Backend active_backend() { return active_id().load(std::memory_order_relaxed); }

bool set_backend(Backend b) {
  if (!backend_available(b)) return false;
  active_slot().store(&table(b), std::memory_order_release);
  active_id().store(b, std::memory_order_relaxed);
  return true;
}

const KernelTable& active() { return *active_slot().load(std::memory_order_acquire); }

void matvec_bias(std::span<const double> w, std::size_t rows, std::size_t cols,
                 std::span<const double> x, std::span<const double> b,
                 std::span<double> y) {
  assert(w.size() == rows * cols && x.size() == cols);
  assert(b.size() == rows && y.size() == rows);
  const KernelTable& k = active();
  for (std::size_t r = 0; r < rows; ++r) {
    y[r] = b[r] + k.dot(w.data() + r * cols, x.data(), cols);
  }
}

void matvec_transposed_acc(std::span<const double> w, std::size_t rows,
                           std::size_t cols, std::span<const double> g,
                           std::span<double> out) {
  assert(w.size() == rows * cols && g.size() == rows && out.size() == cols);
  const KernelTable& k = active();
  for (std::size_t r = 0; r < rows; ++r) {
    if (g[r] != 0.0) k.axpy(g[r], w.data() + r * cols, out.data(), cols);
  }
}

void outer_acc(std::span<double> grad, std::size_t rows, std::size_t cols,
               std::span<const double> g, std::span<const double> x) {
  assert(grad.size() == rows * cols && g.size() == rows && x.size() == cols);
  const KernelTable& k = active();
  for (std::size_t r = 0; r < rows; ++r) {
    if (g[r] != 0.0) k.axpy(g[r], x.data(), grad.data() + r * cols, cols);
  }
}

}  // namespace emshep::kernels
