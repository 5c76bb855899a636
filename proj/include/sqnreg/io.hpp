/*
 * Copyright 2026 The sqnreg Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef SQNREG_IO_HPP_
#define SQNREG_IO_HPP_

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sqnreg/error.hpp"
#include "sqnreg/grid.hpp"
#include "sqnreg/lbfgs.hpp"

namespace sqnreg {

namespace detail {

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCategory::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCategory::Io, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCategory::Io, "write failed for " + path.string());
}

inline Error parse_error(const std::string& what, std::size_t offset) {
  return Error(ErrorCategory::Parse, what + " at byte offset " + std::to_string(offset));
}

/// Shortest decimal text that parses back to exactly `v`.
inline std::string shortest(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

inline double parse_double(std::string_view s, const std::string& what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw Error(ErrorCategory::Parse, "invalid number '" + std::string(s) + "' for " + what);
  return v;
}

inline long parse_long(std::string_view s, const std::string& what) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw Error(ErrorCategory::Parse, "invalid integer '" + std::string(s) + "' for " + what);
  return v;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// PGM (binary P5)

struct PgmData {
  int width = 0;
  int height = 0;
  int maxval = 255;
  std::vector<std::uint16_t> samples;  // row-major, x fastest
};

inline PgmData parse_pgm(const std::vector<unsigned char>& bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&](const char* what) {
    skip_space();
    const std::size_t start = pos;
    long v = 0;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1'000'000'000) throw detail::parse_error(std::string("PGM ") + what + " too large", start);
      ++pos;
    }
    if (pos == start) throw detail::parse_error(std::string("PGM header: expected ") + what, start);
    return static_cast<int>(v);
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
    throw detail::parse_error("not a binary PGM (missing P5 magic)", 0);
  pos = 2;
  PgmData out;
  out.width = read_int("width");
  out.height = read_int("height");
  out.maxval = read_int("maxval");
  if (out.width <= 0 || out.height <= 0) throw detail::parse_error("PGM dimensions must be positive", pos);
  if (out.maxval <= 0 || out.maxval > 65535) throw detail::parse_error("PGM maxval out of range", pos);
  if (pos >= bytes.size() || !std::isspace(bytes[pos]))
    throw detail::parse_error("PGM header must end with one whitespace byte", pos);
  ++pos;
  const std::size_t count = static_cast<std::size_t>(out.width) * out.height;
  const std::size_t bps = out.maxval > 255 ? 2 : 1;
  if (bytes.size() - pos < count * bps)
    throw detail::parse_error("truncated PGM payload (expected " + std::to_string(count * bps) + " bytes)",
                              bytes.size());
  out.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint16_t v = bps == 2 ? static_cast<std::uint16_t>((bytes[pos + 2 * i] << 8) | bytes[pos + 2 * i + 1])
                               : bytes[pos + i];
    if (v > out.maxval) throw detail::parse_error("PGM sample exceeds maxval", pos + bps * i);
    out.samples[i] = v;
  }
  return out;
}

inline std::string encode_pgm(const PgmData& pgm) {
  std::string out = "P5\n" + std::to_string(pgm.width) + " " + std::to_string(pgm.height) + "\n" +
                    std::to_string(pgm.maxval) + "\n";
  const bool wide = pgm.maxval > 255;
  for (std::uint16_t v : pgm.samples) {
    if (wide) out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xff));
  }
  return out;
}

/// Intensities rescaled to [0, 1]; unit spacing, origin at 0.
inline Image load_pgm(const std::filesystem::path& path) {
  const PgmData pgm = parse_pgm(detail::read_file(path));
  detail::require(pgm.width >= 2 && pgm.height >= 2, ErrorCategory::InvalidArgument,
                  path.string() + ": images need at least 2x2 pixels");
  Image img(GridSpec({pgm.width, pgm.height}));
  for (std::size_t i = 0; i < pgm.samples.size(); ++i)
    img.data[i] = static_cast<double>(pgm.samples[i]) / pgm.maxval;
  return img;
}

/// Quantizes [0, 1] intensities to maxval levels (round half to even, clamped).
inline PgmData quantize_pgm(const Image& img, int maxval = 255) {
  detail::require(maxval > 0 && maxval <= 65535, ErrorCategory::InvalidArgument, "PGM maxval out of range");
  PgmData pgm;
  pgm.width = img.grid.dims[0];
  pgm.height = img.grid.dims[1];
  pgm.maxval = maxval;
  pgm.samples.resize(img.data.size());
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const double v = std::nearbyint(img.data[i] * maxval);  // default rounding mode: half to even
    pgm.samples[i] = static_cast<std::uint16_t>(std::clamp(v, 0.0, static_cast<double>(maxval)));
  }
  return pgm;
}

inline void save_pgm(const Image& img, const std::filesystem::path& path, int maxval = 255) {
  detail::write_file(path, encode_pgm(quantize_pgm(img, maxval)));
}

/// Linear rescale of an arbitrary image to [0, 1] for display.
inline Image normalized_for_display(const Image& img) {
  const auto [lo, hi] = std::minmax_element(img.data.begin(), img.data.end());
  Image out(img.grid);
  const double range = *hi - *lo;
  for (std::size_t i = 0; i < img.data.size(); ++i) out.data[i] = range > 0 ? (img.data[i] - *lo) / range : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// SQNFIELD v1: "SQNFIELD v1 m1 m2 h1 h2 x0 y0\n" then 2*m1*m2 little-endian
// float64 values, u1 plane first, x fastest.

inline std::string encode_field(const DisplacementField& field) {
  const auto& g = field.grid;
  std::string out = "SQNFIELD v1 " + std::to_string(g.dims[0]) + " " + std::to_string(g.dims[1]) + " " +
                    detail::shortest(g.spacing[0]) + " " + detail::shortest(g.spacing[1]) + " " +
                    detail::shortest(g.origin[0]) + " " + detail::shortest(g.origin[1]) + "\n";
  const std::size_t header = out.size();
  out.resize(header + 8 * field.u.size());
  for (std::size_t i = 0; i < field.u.size(); ++i) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(field.u[i]);
    for (int b = 0; b < 8; ++b) out[header + 8 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
  }
  return out;
}

inline DisplacementField decode_field(const std::vector<unsigned char>& bytes) {
  const auto nl = std::find(bytes.begin(), bytes.end(), '\n');
  if (nl == bytes.end()) throw detail::parse_error("SQNFIELD header has no newline", bytes.size());
  const std::string header(bytes.begin(), nl);
  std::istringstream in(header);
  std::string magic, version, tok[6];
  in >> magic >> version;
  if (magic != "SQNFIELD" || version != "v1") throw detail::parse_error("SQNFIELD magic mismatch", 0);
  for (auto& t : tok)
    if (!(in >> t)) throw detail::parse_error("SQNFIELD header is incomplete", header.size());
  std::string extra;
  if (in >> extra) throw detail::parse_error("SQNFIELD header has trailing fields", header.size());
  GridSpec g;
  g.dims = {static_cast<int>(detail::parse_long(tok[0], "m1")), static_cast<int>(detail::parse_long(tok[1], "m2"))};
  g.spacing = {detail::parse_double(tok[2], "h1"), detail::parse_double(tok[3], "h2")};
  g.origin = {detail::parse_double(tok[4], "x0"), detail::parse_double(tok[5], "y0")};
  g.validate();
  const std::size_t offset = header.size() + 1;
  const std::size_t count = 2 * static_cast<std::size_t>(g.size());
  if (bytes.size() - offset != 8 * count)
    throw detail::parse_error("SQNFIELD size mismatch: expected " + std::to_string(8 * count) +
                                  " payload bytes, found " + std::to_string(bytes.size() - offset),
                              offset);
  std::vector<double> u(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[offset + 8 * i + b]) << (8 * b);
    u[i] = std::bit_cast<double>(bits);
  }
  return DisplacementField(g, std::move(u));
}

inline void save_field(const DisplacementField& field, const std::filesystem::path& path) {
  detail::write_file(path, encode_field(field));
}

inline DisplacementField load_field(const std::filesystem::path& path) {
  try {
    return decode_field(detail::read_file(path));
  } catch (const Error& e) {
    throw e.annotated(path.string() + ": ");
  }
}

// ---------------------------------------------------------------------------
// Stack manifest: one image path per line, optional label after whitespace,
// '#' starts a comment. Relative paths resolve against the manifest directory.

struct StackManifest {
  std::vector<std::filesystem::path> paths;
  std::vector<std::string> labels;
};

inline StackManifest parse_manifest(const std::string& text, const std::filesystem::path& base) {
  StackManifest m;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string body = detail::trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    std::istringstream ls(body);
    std::string path, label;
    ls >> path;
    std::getline(ls, label);
    std::filesystem::path p(path);
    m.paths.push_back(p.is_absolute() ? p : base / p);
    m.labels.push_back(detail::trim(label));
  }
  detail::require(m.paths.size() >= 2, ErrorCategory::InvalidArgument,
                  "manifest must list at least 2 images");
  return m;
}

inline StackManifest load_manifest(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  return parse_manifest(std::string(bytes.begin(), bytes.end()), path.parent_path());
}

inline ImageStack load_stack(const StackManifest& manifest) {
  std::vector<Image> images;
  for (const auto& p : manifest.paths) images.push_back(load_pgm(p));
  for (std::size_t k = 1; k < images.size(); ++k)
    detail::require(images[k].grid.dims == images[0].grid.dims, ErrorCategory::InvalidArgument,
                    "image " + manifest.paths[k].string() + " has different dimensions");
  return ImageStack(std::move(images));
}

// ---------------------------------------------------------------------------
// Flat "key = value" configuration.

using ConfigMap = std::map<std::string, std::string>;

inline ConfigMap parse_config(const std::string& text) {
  ConfigMap out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string body = detail::trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCategory::Parse, "config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(body.substr(0, eq));
    const std::string value = detail::trim(body.substr(eq + 1));
    if (key.empty())
      throw Error(ErrorCategory::Parse, "config line " + std::to_string(lineno) + ": empty key");
    if (out.count(key))
      throw Error(ErrorCategory::Parse, "config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    out[key] = value;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics CSV

inline constexpr const char* kMetricsHeader =
    "level,iter,component,value,grad_norm,step,evals,time_s,wolfe,subgradient";

struct MetricsRow {
  int level = 0;
  IterRecord rec;
};

inline std::string format_metrics(const std::vector<MetricsRow>& rows) {
  std::ostringstream out;
  out << kMetricsHeader << "\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    out << r.level << ',' << r.rec.iter << ',' << r.rec.component << ',' << num(r.rec.value) << ','
        << num(r.rec.grad_norm) << ',' << num(r.rec.step) << ',' << r.rec.evals << ',' << num(r.rec.time_s)
        << ',' << (r.rec.wolfe ? 1 : 0) << ',' << (r.rec.subgradient ? 1 : 0) << "\n";
  }
  return out.str();
}

inline std::vector<MetricsRow> parse_metrics(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kMetricsHeader)
    throw Error(ErrorCategory::Parse, "metrics CSV: unexpected header");
  std::vector<MetricsRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(detail::trim(cell));
    if (cells.size() != 10)
      throw Error(ErrorCategory::Parse, "metrics CSV line " + std::to_string(lineno) + ": expected 10 columns");
    MetricsRow r;
    r.level = static_cast<int>(detail::parse_long(cells[0], "level"));
    r.rec.iter = static_cast<int>(detail::parse_long(cells[1], "iter"));
    r.rec.component = static_cast<int>(detail::parse_long(cells[2], "component"));
    r.rec.value = detail::parse_double(cells[3], "value");
    r.rec.grad_norm = detail::parse_double(cells[4], "grad_norm");
    r.rec.step = detail::parse_double(cells[5], "step");
    r.rec.evals = detail::parse_long(cells[6], "evals");
    r.rec.time_s = detail::parse_double(cells[7], "time_s");
    r.rec.wolfe = cells[8] == "1";
    r.rec.subgradient = cells[9] == "1";
    rows.push_back(r);
  }
  return rows;
}

}  // namespace sqnreg

#endif  // SQNREG_IO_HPP_
