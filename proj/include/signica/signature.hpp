#pragma once

// Path signatures, expected signatures, signature cumulants and the
// independence contrast built from standardized cross cumulants.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "parallel.hpp"
#include "paths.hpp"
#include "tensor_algebra.hpp"

namespace signica {

/// Right-multiplies `sig` by exp(delta) in place (Chen's relation for one
/// linear segment). Levels are updated top-down with a Horner scheme so each
/// level only reads lower, not yet updated, levels.
inline void chen_extend(TensorSeries& sig, std::span<const double> delta, std::vector<double>& scratch) {
  const std::size_t d = sig.dim(), depth = sig.depth();
  const std::size_t top = sig.level(depth).size();
  if (scratch.size() < 2 * top) scratch.resize(2 * top);
  double* acc = scratch.data();
  double* next = scratch.data() + top;
  for (std::size_t m = depth; m >= 1; --m) {
    // acc_0 = sig_0; acc_j = acc_{j-1} (x) delta / (m - j + 1) + sig_j for j < m;
    // finally sig_m += acc_{m-1} (x) delta.
    acc[0] = sig.level(0)[0];
    std::size_t size = 1;
    for (std::size_t j = 1; j <= m; ++j) {
      const double inv = 1.0 / static_cast<double>(m - j + 1);
      const auto lvl = sig.level(j);
      if (j < m) {
        for (std::size_t i = 0; i < size; ++i) {
          const double a = acc[i] * inv;
          for (std::size_t c = 0; c < d; ++c) next[i * d + c] = a * delta[c] + lvl[i * d + c];
        }
        std::swap(acc, next);
      } else {
        for (std::size_t i = 0; i < size; ++i) {
          const double a = acc[i] * inv;
          for (std::size_t c = 0; c < d; ++c) lvl[i * d + c] += a * delta[c];
        }
      }
      size *= d;
    }
  }
}

/// Signature of the piecewise-linear interpolant of `x`, truncated at `depth`.
/// Depends only on the sequence of points, so it is invariant under any
/// strictly increasing change of the time grid.
inline TensorSeries path_signature(const SamplePath& x, std::size_t depth) {
  x.validate();
  TensorSeries sig = TensorSeries::unit(x.dim, depth);
  std::vector<double> delta(x.dim), scratch;
  for (std::size_t k = 1; k < x.size(); ++k) {
    for (std::size_t c = 0; c < x.dim; ++c) delta[c] = x.at(k, c) - x.at(k - 1, c);
    chen_extend(sig, delta, scratch);
  }
  return sig;
}

/// Signature of a single linear segment with the given increment: exp(delta).
inline TensorSeries segment_signature(std::span<const double> delta, std::size_t depth) {
  TensorSeries sig = TensorSeries::unit(delta.size(), depth);
  std::vector<double> scratch;
  chen_extend(sig, delta, scratch);
  return sig;
}

namespace detail {
constexpr std::size_t kReductionChunk = 16;
}

/// (Weighted) Monte-Carlo mean of the path signatures. Paths are summed in
/// fixed-size chunks whose partial sums are combined in index order, so the
/// result is bit-identical for every thread count.
inline TensorSeries expected_signature(const PathEnsemble& e, std::size_t depth) {
  if (e.num_paths() == 0) throw ValidationError("ensemble", "expected signature of an empty ensemble");
  e.validate();
  const std::size_t n = e.num_paths();
  const std::size_t chunks = (n + detail::kReductionChunk - 1) / detail::kReductionChunk;
  std::vector<TensorSeries> partial(chunks, TensorSeries(e.dim, depth));
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t lo = c * detail::kReductionChunk;
    const std::size_t hi = std::min(n, lo + detail::kReductionChunk);
    for (std::size_t i = lo; i < hi; ++i) {
      TensorSeries s = path_signature(e.path(i), depth);
      s *= e.weight(i);
      partial[c] += s;
    }
  });
  TensorSeries mean(e.dim, depth);
  for (const auto& p : partial) mean += p;
  mean.level(0)[0] = 1.0;
  return mean;
}

/// kappa = log(expected signature).
inline TensorSeries signature_cumulants(const PathEnsemble& e, std::size_t depth) {
  return log_series(expected_signature(e, depth));
}

/// kappa_bar_w = kappa_w / prod_nu kappa_(nu,nu)^(eta_nu(w)/2), where eta_nu(w)
/// counts the letter nu in w. Throws DegenerateNormalization when some
/// diagonal second-level cumulant is <= eps_norm.
inline TensorSeries standardized_cumulants(const TensorSeries& k, double eps_norm = 1e-12) {
  if (k.depth() < 2) throw ValidationError("depth", "standardization needs depth >= 2");
  const std::size_t d = k.dim();
  std::vector<double> factor(d);
  for (std::size_t nu = 0; nu < d; ++nu) {
    const double diag = k.level(2)[nu * d + nu];
    if (!(diag > eps_norm))
      throw DegenerateNormalization("kappa_(" + std::to_string(nu + 1) + "," + std::to_string(nu + 1) +
                                    ") = " + std::to_string(diag) + " is not above the normalization threshold");
    factor[nu] = 1.0 / std::sqrt(diag);
  }
  TensorSeries out = k;
  for (std::size_t m = 1; m <= k.depth(); ++m) {
    auto lvl = out.level(m);
    // Scale by the product of per-letter factors, built level by level.
    std::vector<double> scale{1.0};
    for (std::size_t j = 0; j < m; ++j) {
      std::vector<double> next(scale.size() * d);
      for (std::size_t i = 0; i < scale.size(); ++i)
        for (std::size_t c = 0; c < d; ++c) next[i * d + c] = scale[i] * factor[c];
      scale.swap(next);
    }
    for (std::size_t i = 0; i < lvl.size(); ++i) lvl[i] *= scale[i];
  }
  return out;
}

/// Union over k = 2..d of W_k = { h in i (shuffle) j : i over {1..k-1} nonempty,
/// j = (k,...,k) nonempty }, restricted to |h| <= max_len, without duplicates,
/// ordered by length then lexicographically.
inline std::vector<Word> cross_index_set(std::size_t d, std::size_t max_len) {
  if (d < 2) throw ValidationError("d", "cross index set needs at least 2 coordinates");
  if (max_len < 2) throw ValidationError("mu", "maximal word length must be at least 2");
  std::set<Word> words;
  for (std::size_t k = 2; k <= d; ++k) {
    for (std::size_t i_len = 1; i_len < max_len; ++i_len) {
      const auto prefixes = words_of_length(k - 1, i_len);
      for (std::size_t j_len = 1; i_len + j_len <= max_len; ++j_len) {
        const Word j(std::vector<int>(j_len, static_cast<int>(k)));
        for (const Word& i : prefixes)
          for (Word& h : shuffle(i, j)) words.insert(std::move(h));
      }
    }
  }
  return {words.begin(), words.end()};
}

/// One constraint of the independence characterization: the cumulant paired
/// with the shuffle polynomial i (shuffle) j must vanish.
struct ShufflePair {
  Word i;                   // nonempty, letters in {1..k-1}
  Word j;                   // (k,...,k), nonempty
  std::vector<Word> words;  // i (shuffle) j with multiplicity
  Word key() const { return i + j; }
};

/// All pairs (i, j) over k = 2..d with |i| + |j| <= max_len, ordered by the
/// concatenated word i.j (length, then lexicographic). The concatenation is
/// unique per pair since j is the trailing run of the largest letter.
inline std::vector<ShufflePair> cross_shuffle_pairs(std::size_t d, std::size_t max_len) {
  if (d < 2) throw ValidationError("d", "cross index set needs at least 2 coordinates");
  if (max_len < 2) throw ValidationError("mu", "maximal word length must be at least 2");
  std::vector<ShufflePair> pairs;
  for (std::size_t k = 2; k <= d; ++k)
    for (std::size_t i_len = 1; i_len < max_len; ++i_len)
      for (const Word& i : words_of_length(k - 1, i_len))
        for (std::size_t j_len = 1; i_len + j_len <= max_len; ++j_len) {
          Word j(std::vector<int>(j_len, static_cast<int>(k)));
          auto words = shuffle(i, j);
          pairs.push_back({i, std::move(j), std::move(words)});
        }
  std::sort(pairs.begin(), pairs.end(), [](const ShufflePair& a, const ShufflePair& b) { return a.key() < b.key(); });
  return pairs;
}

struct ContrastOptions {
  std::size_t depth = 5;
  std::size_t mu = 5;
  bool unit_amplitude = true;  // center and scale coordinates before signatures
  double eps_norm = 1e-12;
};

struct ContrastResult {
  std::size_t depth = 0;
  std::size_t mu = 0;
  double value = 0.0;
  std::map<std::string, double> terms;  // key word i.j -> squared pairing <kbar, i (shuffle) j>
};

/// Contrast from given standardized cumulants: the sum over cross pairs (i, j)
/// of <kbar, i (shuffle) j>^2. All words of one shuffle share their letter
/// counts, hence their normalizer, so the pairing commutes with standardization.
inline ContrastResult contrast_from_standardized(const TensorSeries& kbar, std::size_t mu) {
  ContrastResult r;
  r.depth = kbar.depth();
  r.mu = mu;
  for (const ShufflePair& p : cross_shuffle_pairs(kbar.dim(), mu)) {
    double pairing = 0.0;
    for (const Word& w : p.words) pairing += kbar[w];
    r.terms[p.key().to_string()] = pairing * pairing;
    r.value += pairing * pairing;
  }
  return r;
}

/// Independence contrast over cross pairs with |i| + |j| <= mu. Zero when the
/// coordinate processes are independent (exactly so for exactly enumerated laws).
inline ContrastResult contrast_ic(const PathEnsemble& e, const ContrastOptions& opt) {
  if (e.dim < 2) throw ValidationError("d", "contrast needs at least 2 coordinates");
  if (opt.mu > opt.depth) throw ValidationError("mu", "mu exceeds depth");
  const PathEnsemble& input = e;
  const TensorSeries k = opt.unit_amplitude ? signature_cumulants(unit_amplitude(input), opt.depth)
                                            : signature_cumulants(input, opt.depth);
  ContrastResult r = contrast_from_standardized(standardized_cumulants(k, opt.eps_norm), opt.mu);
  r.depth = opt.depth;
  return r;
}

inline ContrastResult contrast_ic(const PathEnsemble& e, std::size_t depth, std::size_t mu) {
  return contrast_ic(e, ContrastOptions{depth, mu, true, 1e-12});
}

inline nlohmann::json to_json(const ContrastResult& r) {
  nlohmann::json terms = nlohmann::json::object();
  for (const auto& [w, v] : r.terms) terms[w] = v;
  return {{"depth", r.depth}, {"mu", r.mu}, {"contrast", r.value}, {"terms", terms}};
}

// ---------------------------------------------------------------------------
// Classical (vector-valued) counterpart for finite-support laws.

struct WeightedPoint {
  std::vector<double> x;
  double weight = 0.0;
};

namespace detail {

// Set partitions of {0..n-1} as block-label vectors (restricted growth strings).
inline void set_partitions(std::size_t n, std::vector<int>& labels, std::size_t pos, int blocks,
                           std::vector<std::vector<int>>& out) {
  if (pos == n) {
    out.push_back(labels);
    return;
  }
  for (int b = 0; b <= blocks; ++b) {
    labels[pos] = b;
    set_partitions(n, labels, pos + 1, std::max(blocks, b + 1), out);
  }
}

// Joint cumulant of the (centered) coordinates listed in `idx` via the
// moment-cumulant formula sum_pi (|pi|-1)! (-1)^{|pi|-1} prod_B E[prod_{i in B} X_i].
inline double joint_cumulant(const std::vector<WeightedPoint>& centered, const std::vector<int>& idx) {
  const std::size_t n = idx.size();
  std::vector<std::vector<int>> parts;
  std::vector<int> labels(n, 0);
  set_partitions(n, labels, 0, 0, parts);
  double total = 0.0;
  for (const auto& part : parts) {
    const int nb = *std::max_element(part.begin(), part.end()) + 1;
    double term = 1.0;
    for (int b = 0; b < nb; ++b) {
      double moment = 0.0;
      for (const auto& p : centered) {
        double prod = 1.0;
        for (std::size_t k = 0; k < n; ++k)
          if (part[k] == b) prod *= p.x[static_cast<std::size_t>(idx[k])];
        moment += p.weight * prod;
      }
      term *= moment;
    }
    double coef = (nb % 2 == 1) ? 1.0 : -1.0;
    for (int f = 2; f < nb; ++f) coef *= f;
    total += coef * term;
  }
  return total;
}

}  // namespace detail

/// Sum over orders j = 2..r and over nondecreasing index tuples with at least
/// two distinct indices of squared standardized classical cross-cumulants of a
/// finite-support law, computed exactly from its moments.
inline double classical_contrast(const std::vector<WeightedPoint>& atoms, std::size_t r, double eps_norm = 1e-12) {
  if (atoms.empty()) throw ValidationError("atoms", "no atoms");
  if (r < 2) throw ValidationError("r", "order must be at least 2");
  const std::size_t d = atoms.front().x.size();
  double total_w = 0.0;
  for (const auto& a : atoms) {
    if (a.x.size() != d) throw DimensionMismatch("atoms differ in dimension");
    if (!(a.weight >= 0.0)) throw ValidationError("weights", "weights must be non-negative");
    total_w += a.weight;
  }
  if (std::abs(total_w - 1.0) > 1e-12) throw ValidationError("weights", "weights must sum to 1");

  std::vector<double> mean(d, 0.0);
  for (const auto& a : atoms)
    for (std::size_t c = 0; c < d; ++c) mean[c] += a.weight * a.x[c];
  std::vector<WeightedPoint> centered = atoms;
  for (auto& a : centered)
    for (std::size_t c = 0; c < d; ++c) a.x[c] -= mean[c];

  std::vector<double> sd(d);
  for (std::size_t c = 0; c < d; ++c) {
    double var = 0.0;
    for (const auto& a : centered) var += a.weight * a.x[c] * a.x[c];
    if (!(var > eps_norm)) throw DegenerateNormalization("coordinate " + std::to_string(c + 1) + " has zero variance");
    sd[c] = std::sqrt(var);
  }

  double sum = 0.0;
  for (std::size_t j = 2; j <= r; ++j) {
    std::vector<int> idx(j, 0);
    for (;;) {
      if (idx.front() != idx.back()) {
        double scale = 1.0;
        for (int i : idx) scale *= sd[static_cast<std::size_t>(i)];
        const double kbar = detail::joint_cumulant(centered, idx) / scale;
        sum += kbar * kbar;
      }
      // next nondecreasing tuple
      std::size_t p = j;
      while (p > 0 && static_cast<std::size_t>(idx[p - 1]) == d - 1) --p;
      if (p == 0) break;
      const int v = idx[p - 1] + 1;
      for (std::size_t q = p - 1; q < j; ++q) idx[q] = v;
    }
  }
  return sum;
}

/// Ensemble of linear paths t -> t*x (from the origin) for a finite-support law.
inline PathEnsemble linear_path_ensemble(const std::vector<WeightedPoint>& atoms) {
  if (atoms.empty()) throw ValidationError("atoms", "no atoms");
  PathEnsemble e;
  e.dim = atoms.front().x.size();
  e.times = {0.0, 1.0};
  for (const auto& a : atoms) {
    std::vector<double> p(2 * e.dim, 0.0);
    for (std::size_t c = 0; c < e.dim; ++c) p[e.dim + c] = a.x[c];
    e.paths.push_back(std::move(p));
    e.weights.push_back(a.weight);
  }
  e.label = "linear";
  return e;
}

}  // namespace signica
