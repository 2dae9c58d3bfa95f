// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace emshep {

// Base for all library errors.  exit_code() is what the CLI returns.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const { return 1; }
};

// Invalid configuration, counts, or parameters; also artifacts whose embedded
// config hash does not match the run.
class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 2; }
};

// Dimension or shape mismatch between inputs.  Reported like a config error.
class ShapeError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 2; }
};

// A pipeline stage is missing an upstream artifact, or a detector bank is
// used before calibration.
class PrerequisiteError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 3; }
};

// NaN/Inf or divergence during numeric work.
class NumericError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 4; }
};

// No region of a trace crossed the segmentation threshold.
class SegmentationError : public NumericError {
 public:
  using NumericError::NumericError;
};

// Malformed or unreadable file.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace emshep
