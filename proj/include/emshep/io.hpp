// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

// Binary containers and CSV helpers.
//
// Every checkpoint is an "EMSV" container:
//
//   char[4]  magic "EMSV"
//   u32      format version (kContainerVersion)
//   char[4]  role tag, e.g. "VICT", "ECLF", "VAEB"
//   u64      config hash of the run that produced it
//   ...      role-specific payload
//
// All integers and floats are little-endian.  A dense network payload is
//
//   u32      layer count L
//   u32[L+1] layer widths, input first
//   f32[]    per layer: weights (out x in, row-major) then biases
//
// with rectifiers on hidden layers and a linear output layer.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "emshep/nn.hpp"

namespace emshep::io {

inline constexpr std::uint32_t kContainerVersion = 1;

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path);

  void u8(std::uint8_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  void bytes(std::string_view s);
  void f32_array(std::span<const double> v);

  void header(std::string_view magic, std::string_view role, std::uint64_t hash);
  void close();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path);

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string bytes(std::size_t n);
  std::vector<double> f32_array(std::size_t n);

  // Checks magic and role; returns the embedded config hash.
  std::uint64_t header(std::string_view magic, std::string_view role);
  bool at_end();

 private:
  void read_raw(void* dst, std::size_t n);
  std::filesystem::path path_;
  std::ifstream in_;
};

void write_mlp(BinaryWriter& w, const nn::Mlp& net);
nn::Mlp read_mlp(BinaryReader& r);

// Shortest decimal that round-trips to the same double.
std::string format_double(double v);
double parse_double(std::string_view s);
long long parse_int(std::string_view s);

std::vector<std::string> split(std::string_view line, char sep);
std::string trim(std::string_view s);

// Minimal CSV table.  Lines starting with '#' before the header are kept as
// comments.
struct CsvTable {
  std::vector<std::string> comments;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path);
  void comment(std::string_view text);
  void row(const std::vector<std::string>& cells);
  void close();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

std::string hex64(std::uint64_t v);
std::uint64_t parse_hex64(std::string_view s);

// FNV-1a, 64 bit.
std::uint64_t fnv1a(std::string_view data);

}  // namespace emshep::io
