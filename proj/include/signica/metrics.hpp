#pragma once

// Kendall rank correlation, concordance matrices and monomial discordance.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "parallel.hpp"
#include "paths.hpp"

namespace signica {

namespace detail {
// Merge sort on `v`, returning the number of inversions (pairs i<j with v[i] > v[j]).
inline std::uint64_t count_inversions(std::vector<double>& v, std::vector<double>& buf, std::size_t lo,
                                      std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::uint64_t swaps = count_inversions(v, buf, lo, mid) + count_inversions(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += mid - i;
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

inline bool is_constant(const std::vector<double>& v) {
  return std::adjacent_find(v.begin(), v.end(), std::not_equal_to<>()) == v.end();
}

// Sum of C(run, 2) over runs of equal consecutive values.
template <class Eq>
std::uint64_t tied_pairs(std::size_t n, Eq eq) {
  std::uint64_t total = 0, run = 1;
  for (std::size_t k = 1; k <= n; ++k) {
    if (k < n && eq(k - 1, k)) {
      ++run;
    } else {
      total += run * (run - 1) / 2;
      run = 1;
    }
  }
  return total;
}
}  // namespace detail

/// Kendall's tau-a: (concordant - discordant) / C(n, 2), ties counted as neither.
/// Knight's O(n log n) algorithm.
inline double kendall_tau(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionMismatch("kendall_tau: sequences differ in length");
  const std::size_t n = a.size();
  if (n < 2) throw ValidationError("n", "kendall_tau needs at least 2 pairs");
  for (std::size_t k = 0; k < n; ++k)
    if (std::isnan(a[k]) || std::isnan(b[k])) throw ValidationError("values", "kendall_tau: NaN input");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return a[i] < a[j] || (a[i] == a[j] && b[i] < b[j]);
  });
  std::vector<double> bs(n);
  for (std::size_t k = 0; k < n; ++k) bs[k] = b[order[k]];

  const std::uint64_t n0 = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  const std::uint64_t n1 = detail::tied_pairs(n, [&](std::size_t i, std::size_t j) { return a[order[i]] == a[order[j]]; });
  const std::uint64_t n3 = detail::tied_pairs(
      n, [&](std::size_t i, std::size_t j) { return a[order[i]] == a[order[j]] && bs[i] == bs[j]; });
  std::vector<double> buf(n);
  const std::uint64_t swaps = detail::count_inversions(bs, buf, 0, n);
  const std::uint64_t n2 = detail::tied_pairs(n, [&](std::size_t i, std::size_t j) { return bs[i] == bs[j]; });

  const double num = static_cast<double>(n0) - static_cast<double>(n1) - static_cast<double>(n2) +
                     static_cast<double>(n3) - 2.0 * static_cast<double>(swaps);
  return num / static_cast<double>(n0);
}

enum class ConcordanceMode { ensemble, single_path };

inline std::string to_string(ConcordanceMode m) { return m == ConcordanceMode::ensemble ? "ensemble" : "single_path"; }

inline ConcordanceMode concordance_mode_from_string(const std::string& s) {
  if (s == "ensemble") return ConcordanceMode::ensemble;
  if (s == "single_path") return ConcordanceMode::single_path;
  throw ValidationError("mode", "unknown concordance mode '" + s + "'");
}

/// d x d matrix of absolute Kendall correlations between estimated (rows) and
/// true (columns) coordinates. Entries lie in [0, 1].
struct ConcordanceMatrix {
  std::size_t d = 0;
  ConcordanceMode mode = ConcordanceMode::ensemble;
  std::vector<double> entries;  // row-major

  double operator()(std::size_t i, std::size_t j) const { return entries[i * d + j]; }
  double& operator()(std::size_t i, std::size_t j) { return entries[i * d + j]; }

  ConcordanceMatrix transposed() const {
    ConcordanceMatrix t{d, mode, entries};
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) t(i, j) = (*this)(j, i);
    return t;
  }

  static ConcordanceMatrix from_rows(const std::vector<std::vector<double>>& rows,
                                     ConcordanceMode mode = ConcordanceMode::ensemble) {
    ConcordanceMatrix c{rows.size(), mode, {}};
    for (const auto& r : rows) {
      if (r.size() != rows.size()) throw DimensionMismatch("concordance matrix must be square");
      c.entries.insert(c.entries.end(), r.begin(), r.end());
    }
    return c;
  }
};

/// Ensemble mode averages over time the |tau| across samples at each fixed
/// time; single-path mode computes |tau| over the time-indexed pairs of each
/// path and averages over paths. Without an explicit mode, one path selects
/// single-path mode and several paths ensemble mode.
/// Slices on which either sequence is constant (e.g. a common fixed start)
/// carry no rank information and are left out of the average.
inline ConcordanceMatrix concordance_matrix(const PathEnsemble& x, const PathEnsemble& y,
                                            std::optional<ConcordanceMode> mode = std::nullopt) {
  if (x.dim != y.dim) throw DimensionMismatch("concordance: dimensions differ");
  if (x.num_times() != y.num_times()) throw DimensionMismatch("concordance: time grids differ");
  if (x.num_paths() != y.num_paths()) throw DimensionMismatch("concordance: path counts differ");
  const ConcordanceMode m = mode.value_or(x.num_paths() == 1 ? ConcordanceMode::single_path : ConcordanceMode::ensemble);
  const std::size_t d = x.dim, n_t = x.num_times(), n_p = x.num_paths();
  if (m == ConcordanceMode::ensemble && n_p < 2) throw ValidationError("paths", "ensemble mode needs at least 2 paths");
  ConcordanceMatrix c{d, m, std::vector<double>(d * d, 0.0)};

  parallel_for(d * d, [&](std::size_t cell) {
    const std::size_t i = cell / d, j = cell % d;
    double acc = 0.0;
    std::size_t used = 0;
    auto add = [&](const std::vector<double>& a, const std::vector<double>& b) {
      if (detail::is_constant(a) || detail::is_constant(b)) return;
      acc += std::abs(kendall_tau(a, b));
      ++used;
    };
    if (m == ConcordanceMode::ensemble) {
      std::vector<double> a(n_p), b(n_p);
      for (std::size_t t = 0; t < n_t; ++t) {
        for (std::size_t p = 0; p < n_p; ++p) {
          a[p] = x.at(p, t, i);
          b[p] = y.at(p, t, j);
        }
        add(a, b);
      }
    } else {
      std::vector<double> a(n_t), b(n_t);
      for (std::size_t p = 0; p < n_p; ++p) {
        for (std::size_t t = 0; t < n_t; ++t) {
          a[t] = x.at(p, t, i);
          b[t] = y.at(p, t, j);
        }
        add(a, b);
      }
    }
    c.entries[cell] = used ? acc / static_cast<double>(used) : 0.0;
  });
  return c;
}

struct Discordance {
  double value = 0.0;
  std::vector<std::size_t> permutation;  // row i matched to column permutation[i]
};

/// min over permutation matrices P of ||C - P||_F / sqrt(d(d-1)), by exhaustive
/// search; the lexicographically smallest minimizing permutation is reported.
inline Discordance monomial_discordance(const ConcordanceMatrix& c) {
  const std::size_t d = c.d;
  if (d < 2) throw ValidationError("d", "discordance needs d >= 2");
  if (d > 10) throw ValidationError("d", "discordance search supports d <= 10");
  if (c.entries.size() != d * d) throw DimensionMismatch("concordance entries do not match d");
  double total_sq = 0.0;
  for (double v : c.entries) total_sq += v * v;
  // ||C - P||^2 = sum C^2 - 2 sum_i C(i, p(i)) + d
  std::vector<std::size_t> perm(d);
  std::iota(perm.begin(), perm.end(), 0);
  Discordance best{std::numeric_limits<double>::infinity(), perm};
  double best_sq = std::numeric_limits<double>::infinity();
  do {
    double dist = total_sq + static_cast<double>(d);
    for (std::size_t i = 0; i < d; ++i) dist -= 2.0 * c(i, perm[i]);
    if (dist < best_sq) {
      best_sq = dist;
      best.permutation = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  // Recompute exactly for the winner so that an exact permutation matrix gives 0.
  double sq = 0.0;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = c(i, j) - (best.permutation[i] == j ? 1.0 : 0.0);
      sq += diff * diff;
    }
  best.value = std::sqrt(sq / static_cast<double>(d * (d - 1)));
  return best;
}

inline nlohmann::json to_json(const ConcordanceMatrix& c) {
  std::vector<std::vector<double>> rows(c.d);
  for (std::size_t i = 0; i < c.d; ++i) rows[i].assign(c.entries.begin() + static_cast<std::ptrdiff_t>(i * c.d),
                                                       c.entries.begin() + static_cast<std::ptrdiff_t>((i + 1) * c.d));
  return {{"mode", to_string(c.mode)}, {"matrix", rows}};
}

inline ConcordanceMatrix concordance_matrix_from_json(const nlohmann::json& j) {
  return ConcordanceMatrix::from_rows(j.at("matrix").get<std::vector<std::vector<double>>>(),
                                      concordance_mode_from_string(j.value("mode", std::string("ensemble"))));
}

/// Metrics bundle: {"mode", "matrix", "discordance", "permutation"}.
inline nlohmann::json metrics_json(const ConcordanceMatrix& c, const Discordance& disc) {
  nlohmann::json j = to_json(c);
  j["discordance"] = disc.value;
  j["permutation"] = disc.permutation;
  return j;
}

inline void write_matrix_csv(std::ostream& os, const ConcordanceMatrix& c) {
  for (std::size_t i = 0; i < c.d; ++i) {
    for (std::size_t j = 0; j < c.d; ++j) os << (j ? "," : "") << format_double(c(i, j));
    os << '\n';
  }
}

}  // namespace signica
