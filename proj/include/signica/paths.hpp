#pragma once

// Sampled paths and path ensembles, with the long-format CSV reader/writer.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"

namespace signica {

/// One d-dimensional path observed at strictly increasing times, read as the
/// piecewise-linear interpolant of its points. Values are stored row-major
/// (point k occupies values[k*d .. k*d+d)).
struct SamplePath {
  std::size_t dim = 0;
  std::vector<double> times;
  std::vector<double> values;

  std::size_t size() const noexcept { return times.size(); }
  std::span<const double> point(std::size_t k) const { return {values.data() + k * dim, dim}; }
  double at(std::size_t k, std::size_t coord) const { return values[k * dim + coord]; }

  void validate() const {
    if (dim == 0) throw ValidationError("path", "dimension must be positive");
    if (times.size() < 2) throw ValidationError("path", "a path needs at least 2 points");
    if (values.size() != times.size() * dim)
      throw DimensionMismatch("path values do not match times x dimension");
    for (std::size_t k = 1; k < times.size(); ++k)
      if (!(times[k] > times[k - 1])) throw ValidationError("path", "times must be strictly increasing");
  }
};

/// N paths sharing dimension and time grid. Optional probability weights turn
/// the ensemble into an exactly enumerated finite-support law.
struct PathEnsemble {
  std::size_t dim = 0;
  std::vector<double> times;
  std::vector<std::vector<double>> paths;  // each of size times.size() * dim
  std::vector<double> weights;             // empty: uniform
  std::string label;
  std::uint64_t seed = 0;

  std::size_t num_paths() const noexcept { return paths.size(); }
  std::size_t num_times() const noexcept { return times.size(); }

  double at(std::size_t path, std::size_t k, std::size_t coord) const {
    return paths[path][k * dim + coord];
  }
  double& at(std::size_t path, std::size_t k, std::size_t coord) { return paths[path][k * dim + coord]; }

  SamplePath path(std::size_t i) const { return SamplePath{dim, times, paths.at(i)}; }

  /// Weight of path i (1/N when unweighted).
  double weight(std::size_t i) const {
    return weights.empty() ? 1.0 / static_cast<double>(paths.size()) : weights[i];
  }

  void validate() const {
    if (dim == 0) throw ValidationError("ensemble", "dimension must be positive");
    if (times.size() < 2) throw ValidationError("ensemble", "time grid needs at least 2 points");
    for (std::size_t k = 1; k < times.size(); ++k)
      if (!(times[k] > times[k - 1])) throw ValidationError("ensemble", "times must be strictly increasing");
    for (const auto& p : paths)
      if (p.size() != times.size() * dim) throw DimensionMismatch("path length does not match grid x dimension");
    if (!weights.empty()) {
      if (weights.size() != paths.size()) throw DimensionMismatch("weights do not match path count");
      double total = 0.0;
      for (double w : weights) {
        if (!(w >= 0.0)) throw ValidationError("weights", "weights must be non-negative");
        total += w;
      }
      if (std::abs(total - 1.0) > 1e-12) throw ValidationError("weights", "weights must sum to 1");
    }
  }

  /// Ensemble restricted to the given path indices (weights renormalized).
  PathEnsemble subset(std::span<const std::size_t> idx) const {
    PathEnsemble out{dim, times, {}, {}, label, seed};
    out.paths.reserve(idx.size());
    double total = 0.0;
    for (std::size_t i : idx) {
      out.paths.push_back(paths.at(i));
      if (!weights.empty()) {
        out.weights.push_back(weights[i]);
        total += weights[i];
      }
    }
    if (!weights.empty())
      for (double& w : out.weights) w /= total;
    return out;
  }
};

/// Affinely maps the time grid onto [0, 1].
inline std::vector<double> normalized_times(const std::vector<double>& times) {
  std::vector<double> out(times);
  if (times.size() < 2) return out;
  const double t0 = times.front(), span = times.back() - times.front();
  for (double& t : out) t = (t - t0) / span;
  out.front() = 0.0;
  out.back() = 1.0;
  return out;
}

/// Centers every coordinate (mean over all paths and times) and scales it so
/// that its largest absolute value is 1. Constant coordinates are only centered.
inline PathEnsemble unit_amplitude(const PathEnsemble& e) {
  PathEnsemble out = e;
  out.times = normalized_times(e.times);
  const std::size_t n = e.num_times();
  for (std::size_t c = 0; c < e.dim; ++c) {
    double sum = 0.0;
    for (const auto& p : e.paths)
      for (std::size_t k = 0; k < n; ++k) sum += p[k * e.dim + c];
    const double mean = sum / static_cast<double>(n * std::max<std::size_t>(1, e.num_paths()));
    double amp = 0.0;
    for (const auto& p : e.paths)
      for (std::size_t k = 0; k < n; ++k) amp = std::max(amp, std::abs(p[k * e.dim + c] - mean));
    const double scale = amp > 0.0 ? 1.0 / amp : 1.0;
    for (auto& p : out.paths)
      for (std::size_t k = 0; k < n; ++k) p[k * e.dim + c] = (p[k * e.dim + c] - mean) * scale;
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV, long format: header `path_id,t,x1,...,xd`, rows sorted by (path_id, t).

/// Shortest round-trip decimal form; deterministic across runs.
inline std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline void write_csv(std::ostream& os, const PathEnsemble& e) {
  os << "path_id,t";
  for (std::size_t c = 1; c <= e.dim; ++c) os << ",x" << c;
  os << '\n';
  for (std::size_t i = 0; i < e.num_paths(); ++i) {
    for (std::size_t k = 0; k < e.num_times(); ++k) {
      os << i << ',' << format_double(e.times[k]);
      for (std::size_t c = 0; c < e.dim; ++c) os << ',' << format_double(e.at(i, k, c));
      os << '\n';
    }
  }
}

inline void write_csv(const std::string& file, const PathEnsemble& e) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw ValidationError("out", "cannot open '" + file + "' for writing");
  write_csv(os, e);
}

namespace detail {
inline double parse_double(const std::string& tok, std::size_t row, const std::string& column) {
  double v = 0.0;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc{} || res.ptr != last)
    throw ValidationError("csv", "row " + std::to_string(row) + " column " + column + ": bad number '" + tok + "'");
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}
}  // namespace detail

/// Reads the long-format CSV. Every path must carry the same time grid.
inline PathEnsemble read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ValidationError("csv", "empty input");
  const auto header = detail::split_csv_line(line);
  if (header.size() < 3 || header[0] != "path_id" || header[1] != "t")
    throw ValidationError("csv", "header must be path_id,t,x1,...,xd");
  const std::size_t dim = header.size() - 2;
  for (std::size_t c = 0; c < dim; ++c)
    if (header[c + 2] != "x" + std::to_string(c + 1))
      throw ValidationError("csv", "unexpected header column '" + header[c + 2] + "'");

  PathEnsemble e;
  e.dim = dim;
  std::vector<double> grid;
  long current_id = -1;
  std::size_t row = 1, k = 0;
  bool first_path_done = false;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != dim + 2)
      throw ValidationError("csv", "row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                                       " columns, expected " + std::to_string(dim + 2));
    long id = 0;
    const auto idr = std::from_chars(cells[0].data(), cells[0].data() + cells[0].size(), id);
    if (idr.ec != std::errc{} || idr.ptr != cells[0].data() + cells[0].size() || id < 0)
      throw ValidationError("csv", "row " + std::to_string(row) + ": bad path_id '" + cells[0] + "'");
    const double t = detail::parse_double(cells[1], row, "t");
    if (id != current_id) {
      if (id < current_id) throw ValidationError("csv", "rows not sorted by path_id at row " + std::to_string(row));
      if (current_id >= 0) {
        if (!first_path_done) {
          e.times = grid;
          first_path_done = true;
        } else if (k != e.times.size()) {
          throw ValidationError("csv", "path " + std::to_string(current_id) + " has a different grid length");
        }
      }
      current_id = id;
      e.paths.emplace_back();
      k = 0;
    }
    if (!first_path_done) {
      grid.push_back(t);
    } else if (k >= e.times.size() || e.times[k] != t) {
      throw ValidationError("csv", "row " + std::to_string(row) + ": time grid differs between paths");
    }
    for (std::size_t c = 0; c < dim; ++c)
      e.paths.back().push_back(detail::parse_double(cells[c + 2], row, header[c + 2]));
    ++k;
  }
  if (current_id < 0) throw ValidationError("csv", "no data rows");
  if (!first_path_done) {
    e.times = grid;
  } else if (k != e.times.size()) {
    throw ValidationError("csv", "path " + std::to_string(current_id) + " has a different grid length");
  }
  e.validate();
  return e;
}

inline PathEnsemble read_csv(const std::string& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw ValidationError("in", "cannot open '" + file + "'");
  return read_csv(is);
}

}  // namespace signica
