// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

#include "fft.hpp"

#include <fftw3.h>

#include <cstring>
#include <map>
#include <mutex>

#include "emshep/errors.hpp"

namespace emshep::fft {

namespace {

struct Plans {
  fftw_plan r2c = nullptr;
  fftw_plan c2r = nullptr;
};

// Planning is not thread-safe in FFTW; execution with the new-array API is.
std::mutex g_plan_mutex;

const Plans& plans_for(std::size_t n) {
  static std::map<std::size_t, Plans> cache;
  std::lock_guard lock(g_plan_mutex);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  const int ni = static_cast<int>(n);
  double* r = fftw_alloc_real(n);
  fftw_complex* c = fftw_alloc_complex(n / 2 + 1);
  Plans p;
  p.r2c = fftw_plan_dft_r2c_1d(ni, r, c, FFTW_ESTIMATE | FFTW_UNALIGNED);
  p.c2r = fftw_plan_dft_c2r_1d(ni, c, r, FFTW_ESTIMATE | FFTW_UNALIGNED);
  fftw_free(r);
  fftw_free(c);
  if (!p.r2c || !p.c2r) throw Error("fft: planning failed for n=" + std::to_string(n));
  return cache.emplace(n, p).first->second;
}

}  // namespace

void forward_real(std::span<const double> in, std::vector<std::complex<double>>& out) {
  const std::size_t n = in.size();
  if (n == 0) throw ShapeError("fft: empty input");
  const Plans& p = plans_for(n);
  std::vector<double> buf(in.begin(), in.end());
  out.assign(n / 2 + 1, {});
  fftw_execute_dft_r2c(p.r2c, buf.data(), reinterpret_cast<fftw_complex*>(out.data()));
}

void inverse_real(std::span<const std::complex<double>> in, std::size_t n,
                  std::vector<double>& out) {
  if (in.size() != n / 2 + 1) throw ShapeError("fft: inverse bin count mismatch");
  const Plans& p = plans_for(n);
  // c2r destroys its input.
  std::vector<std::complex<double>> buf(in.begin(), in.end());
  out.assign(n, 0.0);
  fftw_execute_dft_c2r(p.c2r, reinterpret_cast<fftw_complex*>(buf.data()), out.data());
  const double scale = 1.0 / static_cast<double>(n);
  for (double& v : out) v *= scale;
}

}  // namespace emshep::fft
