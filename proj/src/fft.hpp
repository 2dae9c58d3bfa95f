// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

// Thin FFTW wrapper: real-input transforms with per-size cached plans.

#pragma once

#include <complex>
#include <span>
#include <vector>

namespace emshep::fft {

// out gets n/2 + 1 bins.
void forward_real(std::span<const double> in, std::vector<std::complex<double>>& out);

// Inverse of forward_real for a length-n signal, including the 1/n scale.
void inverse_real(std::span<const std::complex<double>> in, std::size_t n,
                  std::vector<double>& out);

}  // namespace emshep::fft
