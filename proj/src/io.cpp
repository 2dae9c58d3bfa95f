// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

#include "emshep/io.hpp"

#include <bit>
#include <charconv>
#include <cstring>

#include "emshep/errors.hpp"

namespace emshep::io {

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

BinaryWriter::BinaryWriter(const std::filesystem::path& path)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw Error("cannot open for writing: " + path.string());
}

void BinaryWriter::u8(std::uint8_t v) { out_.write(reinterpret_cast<const char*>(&v), 1); }
void BinaryWriter::u32(std::uint32_t v) { out_.write(reinterpret_cast<const char*>(&v), 4); }
void BinaryWriter::u64(std::uint64_t v) { out_.write(reinterpret_cast<const char*>(&v), 8); }
void BinaryWriter::f32(float v) { out_.write(reinterpret_cast<const char*>(&v), 4); }
void BinaryWriter::f64(double v) { out_.write(reinterpret_cast<const char*>(&v), 8); }
void BinaryWriter::bytes(std::string_view s) { out_.write(s.data(), static_cast<std::streamsize>(s.size())); }

void BinaryWriter::f32_array(std::span<const double> v) {
  std::vector<float> buf(v.begin(), v.end());
  out_.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

void BinaryWriter::header(std::string_view magic, std::string_view role, std::uint64_t hash) {
  if (magic.size() != 4 || role.size() != 4) throw Error("container tags must be 4 bytes");
  bytes(magic);
  u32(kContainerVersion);
  bytes(role);
  u64(hash);
}

void BinaryWriter::close() {
  out_.close();
  if (!out_) throw Error("write failed: " + path_.string());
}

BinaryReader::BinaryReader(const std::filesystem::path& path)
    : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw FormatError("cannot open: " + path.string());
}

void BinaryReader::read_raw(void* dst, std::size_t n) {
  in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in_.gcount()) != n) {
    throw FormatError("truncated file: " + path_.string());
  }
}

std::uint8_t BinaryReader::u8() { std::uint8_t v; read_raw(&v, 1); return v; }
std::uint32_t BinaryReader::u32() { std::uint32_t v; read_raw(&v, 4); return v; }
std::uint64_t BinaryReader::u64() { std::uint64_t v; read_raw(&v, 8); return v; }
float BinaryReader::f32() { float v; read_raw(&v, 4); return v; }
double BinaryReader::f64() { double v; read_raw(&v, 8); return v; }

std::string BinaryReader::bytes(std::size_t n) {
  std::string s(n, '\0');
  read_raw(s.data(), n);
  return s;
}

std::vector<double> BinaryReader::f32_array(std::size_t n) {
  std::vector<float> buf(n);
  read_raw(buf.data(), n * sizeof(float));
  return {buf.begin(), buf.end()};
}

std::uint64_t BinaryReader::header(std::string_view magic, std::string_view role) {
  const std::string m = bytes(4);
  if (m != magic) throw FormatError("bad magic in " + path_.string());
  const std::uint32_t version = u32();
  if (version != kContainerVersion) {
    throw FormatError("unsupported format version " + std::to_string(version) + " in " +
                      path_.string());
  }
  const std::string r = bytes(4);
  if (!role.empty() && r != role) {
    throw FormatError("expected role " + std::string(role) + ", found " + r + " in " +
                      path_.string());
  }
  return u64();
}

bool BinaryReader::at_end() { return in_.peek() == std::ifstream::traits_type::eof(); }

void write_mlp(BinaryWriter& w, const nn::Mlp& net) {
  const auto dims = net.dims();
  w.u32(static_cast<std::uint32_t>(net.num_layers()));
  for (std::size_t d : dims) w.u32(static_cast<std::uint32_t>(d));
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    w.f32_array(net.layer(i).w);
    w.f32_array(net.layer(i).b);
  }
}

nn::Mlp read_mlp(BinaryReader& r) {
  const std::uint32_t n_layers = r.u32();
  if (n_layers == 0 || n_layers > 64) throw FormatError("implausible layer count");
  std::vector<std::size_t> dims(n_layers + 1);
  for (auto& d : dims) {
    d = r.u32();
    if (d == 0 || d > (1u << 24)) throw FormatError("implausible layer width");
  }
  std::vector<nn::Activation> acts(n_layers, nn::Activation::kRelu);
  acts.back() = nn::Activation::kLinear;
  nn::Mlp net(dims, acts);
  for (std::size_t i = 0; i < n_layers; ++i) {
    auto& l = net.layer(i);
    l.w = r.f32_array(l.w.size());
    l.b = r.f32_array(l.b.size());
  }
  return net;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s) {
  const std::string t = trim(s);
  double v = 0.0;
  auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size()) {
    throw FormatError("not a number: '" + t + "'");
  }
  return v;
}

long long parse_int(std::string_view s) {
  const std::string t = trim(s);
  long long v = 0;
  auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size()) {
    throw FormatError("not an integer: '" + t + "'");
  }
  return v;
}

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      break;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string trim(std::string_view s) {
  const char* ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw FormatError("missing CSV column: " + std::string(name));
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open: " + path.string());
  CsvTable t;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!have_header) {
      if (!line.empty() && line[0] == '#') {
        t.comments.push_back(trim(line.substr(1)));
        continue;
      }
      t.header = split(line, ',');
      have_header = true;
      continue;
    }
    if (line.empty()) continue;
    t.rows.push_back(split(line, ','));
    if (t.rows.back().size() != t.header.size()) {
      throw FormatError("ragged CSV row in " + path.string());
    }
  }
  if (!have_header) throw FormatError("empty CSV: " + path.string());
  return t;
}

CsvWriter::CsvWriter(const std::filesystem::path& path) : path_(path), out_(path) {
  if (!out_) throw Error("cannot open for writing: " + path.string());
}

void CsvWriter::comment(std::string_view text) { out_ << "# " << text << '\n'; }

void CsvWriter::row(const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out_ << ',';
    out_ << cells[i];
  }
  out_ << '\n';
}

void CsvWriter::close() {
  out_.close();
  if (!out_) throw Error("write failed: " + path_.string());
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t parse_hex64(std::string_view s) {
  const std::string t = trim(s);
  std::uint64_t v = 0;
  auto res = std::from_chars(t.data(), t.data() + t.size(), v, 16);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size()) {
    throw FormatError("bad hex value: '" + t + "'");
  }
  return v;
}

std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace emshep::io
