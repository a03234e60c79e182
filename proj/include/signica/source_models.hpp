#pragma once

// Simulators for independent-component source processes and numerical
// diagnostics for their temporal structure (separability of two-time
// densities, distinctness of the Xi ratios of Gaussian-type sources).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <boost/math/special_functions/erf.hpp>
#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "parallel.hpp"
#include "paths.hpp"
#include "rng.hpp"

namespace signica {

enum class SourceKind { ou, gp_gamma_exp, fbm, gbm, white_noise_drift, copula_markov };
enum class CopulaFamily { clayton, gumbel, frank };

inline std::string to_string(SourceKind k) {
  switch (k) {
    case SourceKind::ou: return "ou";
    case SourceKind::gp_gamma_exp: return "gp_gamma_exp";
    case SourceKind::fbm: return "fbm";
    case SourceKind::gbm: return "gbm";
    case SourceKind::white_noise_drift: return "white_noise_drift";
    case SourceKind::copula_markov: return "copula_markov";
  }
  return "?";
}

inline SourceKind source_kind_from_string(const std::string& s) {
  for (auto k : {SourceKind::ou, SourceKind::gp_gamma_exp, SourceKind::fbm, SourceKind::gbm,
                 SourceKind::white_noise_drift, SourceKind::copula_markov})
    if (to_string(k) == s) return k;
  throw ValidationError("kind", "unknown source model '" + s + "'");
}

inline std::string to_string(CopulaFamily f) {
  switch (f) {
    case CopulaFamily::clayton: return "clayton";
    case CopulaFamily::gumbel: return "gumbel";
    case CopulaFamily::frank: return "frank";
  }
  return "?";
}

inline CopulaFamily copula_family_from_string(const std::string& s) {
  for (auto f : {CopulaFamily::clayton, CopulaFamily::gumbel, CopulaFamily::frank})
    if (to_string(f) == s) return f;
  throw ValidationError("family", "unknown copula family '" + s + "'");
}

// Per-coordinate parameters. Unused fields are ignored by the other kinds.
struct CoordinateParams {
  // ou: dS = theta (mu - S) dt + sigma dB
  double theta = 1.0;
  double sigma = 1.0;
  double mu = 0.0;
  std::optional<double> start;  // ou: fixed S_0; default stationary N(mu, sigma^2 / 2 theta)
  // gp_gamma_exp: kappa(s,t) = exp(-(|t-s|/alpha)^gamma)
  double alpha = 1.0;
  double gamma = 1.0;
  // fbm
  double hurst = 0.5;
  // gbm: dS = S (mu dt + sigma(t) dB), white_noise_drift: dS = mu dt + sigma(t) dB,
  // with sigma(t) = sigma * exp(vol_growth * t)
  double s0 = 1.0;
  double vol_growth = 0.0;
  // copula_markov
  CopulaFamily family = CopulaFamily::clayton;
  double copula_theta = 2.0;
};

struct SourceSpec {
  SourceKind kind = SourceKind::ou;
  std::vector<CoordinateParams> coords;
  std::size_t steps = 500;  // grid has steps + 1 points
  double horizon = 1.0;
  std::size_t n_paths = 128;
  std::uint64_t seed = 0;

  std::size_t dim() const noexcept { return coords.size(); }

  std::vector<double> grid() const {
    std::vector<double> t(steps + 1);
    for (std::size_t k = 0; k <= steps; ++k)
      t[k] = horizon * static_cast<double>(k) / static_cast<double>(steps);
    return t;
  }
};

/// Validates the copula parameter for its family.
inline void check_copula_theta(CopulaFamily f, double theta) {
  const std::string field = "copula_theta";
  if (!std::isfinite(theta)) throw ValidationError(field, "must be finite");
  switch (f) {
    case CopulaFamily::clayton:
      if (!(theta > -1.0) || theta == 0.0 || theta == -0.5)
        throw ValidationError(field, "Clayton needs theta in (-1, inf) without {0, -1/2}");
      break;
    case CopulaFamily::gumbel:
      if (theta < -1.0 || theta > 1.0 || theta == 0.0)
        throw ValidationError(field, "this family needs theta in [-1, 1] without {0}");
      break;
    case CopulaFamily::frank:
      if (theta == 0.0) throw ValidationError(field, "Frank needs theta != 0");
      break;
  }
}

inline void validate(const SourceSpec& s) {
  if (s.coords.empty()) throw ValidationError("d", "dimension must be positive");
  if (s.steps < 1) throw ValidationError("steps", "need at least one step");
  if (!(s.horizon > 0.0)) throw ValidationError("horizon", "must be positive");
  if (s.n_paths < 1) throw ValidationError("paths", "need at least one path");
  for (const auto& c : s.coords) {
    switch (s.kind) {
      case SourceKind::ou:
        if (!(c.theta > 0.0)) throw ValidationError("theta", "OU mean reversion must be positive");
        if (!(c.sigma > 0.0)) throw ValidationError("sigma", "OU volatility must be positive");
        break;
      case SourceKind::gp_gamma_exp:
        if (!(c.gamma > 0.0 && c.gamma <= 2.0)) throw ValidationError("gamma", "must lie in (0, 2]");
        if (c.alpha == 0.0 || !std::isfinite(c.alpha)) throw ValidationError("alpha", "must be nonzero");
        break;
      case SourceKind::fbm:
        if (!(c.hurst > 0.0 && c.hurst < 1.0)) throw ValidationError("hurst", "must lie in (0, 1)");
        break;
      case SourceKind::gbm:
        if (!(c.s0 > 0.0)) throw ValidationError("s0", "GBM start must be positive");
        if (!(c.sigma > 0.0)) throw ValidationError("sigma", "GBM volatility must be positive");
        break;
      case SourceKind::white_noise_drift:
        if (!(c.sigma > 0.0)) throw ValidationError("sigma", "volatility must be positive");
        break;
      case SourceKind::copula_markov:
        check_copula_theta(c.family, c.copula_theta);
        break;
    }
  }
}

// ---------------------------------------------------------------------------
// Normal distribution helpers.

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal quantile needs p in (0,1)");
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p);
}

// ---------------------------------------------------------------------------
// Copulas.

/// Copula density c_theta(x, y) on (0,1)^2, exactly as in the closed forms:
///   clayton: (1+t)(xy)^(-1-t) (x^-t + y^-t - 1)^(-2-1/t)
///   gumbel:  1 + t(1-2x)(1-2y)       (this is the FGM form; the name follows the source)
///   frank:   t e^{t(x+y)} (e^t - 1) / (e^t - e^{tx} - e^{ty} + e^{t(x+y)})^2
/// For negative-theta Clayton the density is 0 outside its support.
inline double copula_density(CopulaFamily f, double theta, double x, double y) {
  check_copula_theta(f, theta);
  if (!(x > 0.0 && x < 1.0 && y > 0.0 && y < 1.0)) throw DomainError("copula density needs (x,y) in (0,1)^2");
  switch (f) {
    case CopulaFamily::clayton: {
      const double base = -1.0 + std::pow(x, -theta) + std::pow(y, -theta);
      if (base <= 0.0) return 0.0;
      return (1.0 + theta) * std::pow(x * y, -1.0 - theta) * std::pow(base, -2.0 - 1.0 / theta);
    }
    case CopulaFamily::gumbel:
      return 1.0 + theta * (1.0 - 2.0 * x) * (1.0 - 2.0 * y);
    case CopulaFamily::frank: {
      const double num = theta * std::exp(theta * (x + y)) * std::expm1(theta);
      const double den = std::exp(theta) - std::exp(theta * x) - std::exp(theta * y) + std::exp(theta * (x + y));
      return num / (den * den);
    }
  }
  return 0.0;
}

/// Conditional distribution h(v | u) = dC(u, v)/du of the second argument given the first.
inline double copula_h(CopulaFamily f, double theta, double u, double v) {
  switch (f) {
    case CopulaFamily::clayton: {
      const double base = std::pow(u, -theta) + std::pow(v, -theta) - 1.0;
      if (base <= 0.0) return theta < 0.0 ? 1.0 : 0.0;
      return std::pow(u, -theta - 1.0) * std::pow(base, -1.0 / theta - 1.0);
    }
    case CopulaFamily::gumbel:
      return v + theta * v * (1.0 - v) * (1.0 - 2.0 * u);
    case CopulaFamily::frank: {
      const double a = std::expm1(theta * u), b = std::expm1(theta * v);
      return std::exp(theta * u) * b / (std::expm1(theta) + a * b);
    }
  }
  return 0.0;
}

/// Inverse of v -> h(v | u): closed form for Clayton, quadratic root for the
/// FGM-form density, bisection to 1e-12 for Frank.
inline double copula_h_inverse(CopulaFamily f, double theta, double u, double w) {
  switch (f) {
    case CopulaFamily::clayton: {
      const double base = std::pow(w * std::pow(u, theta + 1.0), -theta / (1.0 + theta)) + 1.0 - std::pow(u, -theta);
      return std::pow(base, -1.0 / theta);
    }
    case CopulaFamily::gumbel: {
      const double a = theta * (1.0 - 2.0 * u);
      if (std::abs(a) < 1e-14) return w;
      // a v^2 - (1 + a) v + w = 0, root in [0, 1]
      const double disc = (1.0 + a) * (1.0 + a) - 4.0 * a * w;
      return ((1.0 + a) - std::sqrt(std::max(0.0, disc))) / (2.0 * a);
    }
    case CopulaFamily::frank: {
      double lo = 0.0, hi = 1.0;
      while (hi - lo > 1e-12) {
        const double mid = 0.5 * (lo + hi);
        if (copula_h(f, theta, u, mid) < w) lo = mid;
        else hi = mid;
      }
      return 0.5 * (lo + hi);
    }
  }
  return w;
}

// ---------------------------------------------------------------------------
// Covariance kernels of the Gaussian-type sources.

/// Integrated variance int_s^t sigma(r)^2 dr for sigma(r) = sigma exp(g r).
inline double integrated_variance(const CoordinateParams& c, double s, double t) {
  const double g = c.vol_growth;
  if (std::abs(g) < 1e-14) return c.sigma * c.sigma * (t - s);
  return c.sigma * c.sigma * (std::exp(2.0 * g * t) - std::exp(2.0 * g * s)) / (2.0 * g);
}

/// Covariance kernel of the Gaussian part of a coordinate (for gbm: of log S).
inline double covariance_kernel(SourceKind kind, const CoordinateParams& c, double s, double t) {
  switch (kind) {
    case SourceKind::ou: {
      const double g = c.sigma * c.sigma / (2.0 * c.theta);
      if (c.start) return g * (std::exp(-c.theta * std::abs(s - t)) - std::exp(-c.theta * (s + t)));
      return g * std::exp(-c.theta * std::abs(s - t));
    }
    case SourceKind::gp_gamma_exp:
      return std::exp(-std::pow(std::abs(t - s) / std::abs(c.alpha), c.gamma));
    case SourceKind::fbm: {
      const double h2 = 2.0 * c.hurst;
      return 0.5 * (std::pow(std::abs(t), h2) + std::pow(std::abs(s), h2) - std::pow(std::abs(t - s), h2));
    }
    case SourceKind::gbm:
    case SourceKind::white_noise_drift:
      return integrated_variance(c, 0.0, std::min(s, t));
    case SourceKind::copula_markov:
      break;
  }
  throw Unsupported("no closed-form covariance kernel for " + to_string(kind));
}

namespace detail {

// Lower Cholesky factor; one retry with 1e-10 I jitter.
inline Eigen::MatrixXd cholesky_with_jitter(Eigen::MatrixXd cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    cov.diagonal().array() += 1e-10;
    llt.compute(cov);
    if (llt.info() != Eigen::Success)
      throw NotPositiveDefinite("covariance matrix is not positive definite even after jitter");
  }
  return llt.matrixL();
}

struct GaussianFactor {
  std::size_t first = 0;  // grid nodes before `first` are deterministic zeros
  Eigen::MatrixXd lower;
};

inline GaussianFactor gaussian_factor(SourceKind kind, const CoordinateParams& c, const std::vector<double>& t) {
  GaussianFactor f;
  // fBM vanishes at t = 0; factor only the remaining nodes.
  f.first = (kind == SourceKind::fbm && t.front() == 0.0) ? 1 : 0;
  const std::size_t n = t.size() - f.first;
  Eigen::MatrixXd cov(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j)
      cov(i, j) = cov(j, i) = covariance_kernel(kind, c, t[i + f.first], t[j + f.first]);
  f.lower = cholesky_with_jitter(std::move(cov));
  return f;
}

}  // namespace detail

/// Draws `spec.n_paths` paths. Coordinates are simulated independently, each
/// from its own RNG stream derived from (seed, path, coordinate), so the output
/// does not depend on scheduling or thread count.
inline PathEnsemble simulate(const SourceSpec& spec) {
  validate(spec);
  const std::size_t d = spec.dim();
  const std::vector<double> t = spec.grid();
  const std::size_t n = t.size();

  std::vector<detail::GaussianFactor> factors;
  if (spec.kind == SourceKind::gp_gamma_exp || spec.kind == SourceKind::fbm)
    for (const auto& c : spec.coords) factors.push_back(detail::gaussian_factor(spec.kind, c, t));

  PathEnsemble e;
  e.dim = d;
  e.times = t;
  e.paths.assign(spec.n_paths, std::vector<double>(n * d, 0.0));
  e.label = to_string(spec.kind);
  e.seed = spec.seed;

  const std::uint64_t sim_seed = substream(spec.seed, "simulate");
  parallel_for(spec.n_paths, [&](std::size_t p) {
    auto& path = e.paths[p];
    for (std::size_t c = 0; c < d; ++c) {
      const CoordinateParams& par = spec.coords[c];
      Engine rng(derive_seed(sim_seed, {p, c}));
      std::normal_distribution<double> normal(0.0, 1.0);
      auto x = [&](std::size_t k) -> double& { return path[k * d + c]; };
      switch (spec.kind) {
        case SourceKind::ou: {
          const double stat_sd = par.sigma / std::sqrt(2.0 * par.theta);
          x(0) = par.start ? *par.start : par.mu + stat_sd * normal(rng);
          for (std::size_t k = 1; k < n; ++k) {
            const double dt = t[k] - t[k - 1];
            const double decay = std::exp(-par.theta * dt);
            const double sd = par.sigma * std::sqrt(-std::expm1(-2.0 * par.theta * dt) / (2.0 * par.theta));
            x(k) = par.mu + (x(k - 1) - par.mu) * decay + sd * normal(rng);
          }
          break;
        }
        case SourceKind::gp_gamma_exp:
        case SourceKind::fbm: {
          const auto& f = factors[c];
          const std::size_t m = n - f.first;
          Eigen::VectorXd z(m);
          for (std::size_t k = 0; k < m; ++k) z(k) = normal(rng);
          const Eigen::VectorXd y = f.lower.triangularView<Eigen::Lower>() * z;
          for (std::size_t k = 0; k < m; ++k) x(k + f.first) = y(k);
          break;
        }
        case SourceKind::gbm: {
          double logs = std::log(par.s0);
          x(0) = par.s0;
          for (std::size_t k = 1; k < n; ++k) {
            const double v = integrated_variance(par, t[k - 1], t[k]);
            logs += par.mu * (t[k] - t[k - 1]) - 0.5 * v + std::sqrt(v) * normal(rng);
            x(k) = std::exp(logs);
          }
          break;
        }
        case SourceKind::white_noise_drift: {
          x(0) = 0.0;
          for (std::size_t k = 1; k < n; ++k) {
            const double v = integrated_variance(par, t[k - 1], t[k]);
            x(k) = x(k - 1) + par.mu * (t[k] - t[k - 1]) + std::sqrt(v) * normal(rng);
          }
          break;
        }
        case SourceKind::copula_markov: {
          // Stationary N(0,1) marginal; transitions by inverting h(. | u_prev).
          double u = normal_cdf(normal(rng));
          u = std::clamp(u, 1e-15, 1.0 - 1e-15);
          x(0) = normal_quantile(u);
          for (std::size_t k = 1; k < n; ++k) {
            const double w = open_unit(rng);
            u = std::clamp(copula_h_inverse(par.family, par.copula_theta, u, w), 1e-15, 1.0 - 1e-15);
            x(k) = normal_quantile(u);
          }
          break;
        }
      }
    }
  });
  return e;
}

// ---------------------------------------------------------------------------
// Separability diagnostics on gridded bivariate densities.

/// Density values on a tensor grid: values[i * ys.size() + j] = zeta(xs[i], ys[j]).
struct BivariateDensityGrid {
  std::vector<double> xs;
  std::vector<double> ys;
  std::vector<double> values;

  double operator()(std::size_t i, std::size_t j) const { return values[i * ys.size() + j]; }

  template <typename F>
  static BivariateDensityGrid sample(std::vector<double> xs, std::vector<double> ys, F&& f) {
    BivariateDensityGrid g{std::move(xs), std::move(ys), {}};
    g.values.reserve(g.xs.size() * g.ys.size());
    for (double x : g.xs)
      for (double y : g.ys) g.values.push_back(f(x, y));
    return g;
  }
};

/// Real-valued field on the interior nodes of a grid.
struct ScalarGrid {
  std::vector<double> xs;
  std::vector<double> ys;
  std::vector<double> values;

  double operator()(std::size_t i, std::size_t j) const { return values[i * ys.size() + j]; }
};

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t k = 0; k < n; ++k)
    v[k] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n - 1);
  return v;
}

/// d/dx d/dy log zeta by second-order central differences on interior nodes.
inline ScalarGrid mixed_log_derivative(const BivariateDensityGrid& g) {
  const std::size_t nx = g.xs.size(), ny = g.ys.size();
  if (nx < 3 || ny < 3) throw ValidationError("grid", "need at least 3 nodes per axis");
  if (g.values.size() != nx * ny) throw DimensionMismatch("grid values do not match axes");
  for (double v : g.values)
    if (!(v > 0.0)) throw DomainError("density must be positive on the grid");
  auto increasing = [](const std::vector<double>& a) {
    return std::adjacent_find(a.begin(), a.end(), std::greater_equal<>()) == a.end();
  };
  if (!increasing(g.xs) || !increasing(g.ys)) throw ValidationError("grid", "axes must be strictly increasing");

  ScalarGrid out;
  out.xs.assign(g.xs.begin() + 1, g.xs.end() - 1);
  out.ys.assign(g.ys.begin() + 1, g.ys.end() - 1);
  out.values.reserve(out.xs.size() * out.ys.size());
  auto lg = [&](std::size_t i, std::size_t j) { return std::log(g(i, j)); };
  for (std::size_t i = 1; i + 1 < nx; ++i) {
    const double hx = g.xs[i + 1] - g.xs[i - 1];
    for (std::size_t j = 1; j + 1 < ny; ++j) {
      const double hy = g.ys[j + 1] - g.ys[j - 1];
      out.values.push_back((lg(i + 1, j + 1) - lg(i + 1, j - 1) - lg(i - 1, j + 1) + lg(i - 1, j - 1)) / (hx * hy));
    }
  }
  return out;
}

enum class Separability { separable, non_separable_diag_vanishing, regularly_non_separable };

inline std::string to_string(Separability s) {
  switch (s) {
    case Separability::separable: return "separable";
    case Separability::non_separable_diag_vanishing: return "non_separable_diag_vanishing";
    case Separability::regularly_non_separable: return "regularly_non_separable";
  }
  return "?";
}

struct SeparabilityReport {
  Separability verdict = Separability::separable;
  double near_zero_fraction = 0.0;           // over all interior nodes
  double diagonal_near_zero_fraction = 0.0;  // over the nodes nearest to x = y
};

/// Classifies a gridded density: separable when the mixed log-derivative is
/// near zero (|.| <= tol) on at least 99% of interior nodes; otherwise
/// "diagonal vanishing" when it is near zero on at least half of the diagonal
/// nodes; otherwise regularly non-separable.
inline SeparabilityReport separability_classify(const BivariateDensityGrid& g, double tol) {
  const ScalarGrid xi = mixed_log_derivative(g);
  SeparabilityReport r;
  std::size_t near = 0;
  for (double v : xi.values) near += std::abs(v) <= tol;
  r.near_zero_fraction = static_cast<double>(near) / static_cast<double>(xi.values.size());

  // Diagonal band: for each x node inside the y range, the nearest y node.
  std::size_t diag = 0, diag_near = 0;
  for (std::size_t i = 0; i < xi.xs.size(); ++i) {
    const double x = xi.xs[i];
    if (x < xi.ys.front() || x > xi.ys.back()) continue;
    const auto it = std::min_element(xi.ys.begin(), xi.ys.end(),
                                     [x](double a, double b) { return std::abs(a - x) < std::abs(b - x); });
    const std::size_t j = static_cast<std::size_t>(it - xi.ys.begin());
    ++diag;
    diag_near += std::abs(xi(i, j)) <= tol;
  }
  r.diagonal_near_zero_fraction = diag ? static_cast<double>(diag_near) / static_cast<double>(diag) : 0.0;

  if (r.near_zero_fraction >= 0.99) r.verdict = Separability::separable;
  else if (diag && r.diagonal_near_zero_fraction >= 0.5) r.verdict = Separability::non_separable_diag_vanishing;
  else r.verdict = Separability::regularly_non_separable;
  return r;
}

// ---------------------------------------------------------------------------
// gamma-contrastivity of Gaussian-type sources.

struct TimePair {
  double s = 0.0;
  double t = 0.0;
  friend bool operator==(const TimePair&, const TimePair&) = default;
};

/// Default search grid: all (s, t) with s < t taken from {k/20 : k = 1..19}.
inline std::vector<TimePair> default_pair_grid() {
  std::vector<TimePair> out;
  for (int a = 1; a <= 19; ++a)
    for (int b = a + 1; b <= 19; ++b) out.push_back({a / 20.0, b / 20.0});
  return out;
}

/// Mixed log-derivative coefficient xi_p = kappa(s,t) / (kappa(s,s) kappa(t,t) - kappa(s,t)^2)
/// of the two-time Gaussian law (for gbm: the coefficient beta of log x log y).
inline double xi_coefficient(SourceKind kind, const CoordinateParams& c, TimePair p) {
  const double kst = covariance_kernel(kind, c, p.s, p.t);
  const double kss = covariance_kernel(kind, c, p.s, p.s);
  const double ktt = covariance_kernel(kind, c, p.t, p.t);
  return kst / (kss * ktt - kst * kst);
}

/// Xi_i = xi_{p1} xi_{p2} / xi_{p0}^2 for every coordinate.
inline std::vector<double> xi_ratios(const SourceSpec& spec, TimePair p0, TimePair p1, TimePair p2) {
  std::vector<double> out;
  for (const auto& c : spec.coords) {
    const double x0 = xi_coefficient(spec.kind, c, p0);
    out.push_back(xi_coefficient(spec.kind, c, p1) * xi_coefficient(spec.kind, c, p2) / (x0 * x0));
  }
  return out;
}

struct ContrastivityReport {
  bool satisfied = false;
  std::vector<double> xi;  // Xi vector at the witness (or at the best candidate)
  TimePair p0, p1, p2;
  double min_relative_gap = 0.0;
};

namespace detail {
inline double min_relative_gap(const std::vector<double>& xi) {
  double gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < xi.size(); ++i)
    for (std::size_t j = i + 1; j < xi.size(); ++j) {
      const double scale = std::max(std::abs(xi[i]), std::abs(xi[j]));
      gap = std::min(gap, scale > 0.0 ? std::abs(xi[i] - xi[j]) / scale : 0.0);
    }
  return gap;
}
}  // namespace detail

/// Searches triples (p0, p1, p2 = p0) over the pair grid for a Xi vector with
/// pairwise distinct entries (relative gap > gap_tol). Returns the triple with
/// the largest gap; `satisfied` tells whether it clears the tolerance.
inline ContrastivityReport gamma_contrastivity_check(const SourceSpec& spec,
                                                     const std::vector<TimePair>& pairs = default_pair_grid(),
                                                     double gap_tol = 1e-6) {
  if (spec.kind == SourceKind::copula_markov)
    throw Unsupported("gamma-contrastivity check needs a closed-form kernel; copula sources are alpha-contrastive");
  validate(spec);
  if (pairs.size() < 2) throw ValidationError("pairs", "need at least two candidate time pairs");
  for (const auto& p : pairs)
    if (!(p.s < p.t) || p.s <= 0.0) throw ValidationError("pairs", "each pair needs 0 < s < t");

  ContrastivityReport best;
  best.min_relative_gap = -1.0;
  for (const auto& p0 : pairs) {
    for (const auto& p1 : pairs) {
      if (p0 == p1) continue;
      auto xi = xi_ratios(spec, p0, p1, p0);
      if (!std::all_of(xi.begin(), xi.end(), [](double v) { return std::isfinite(v); })) continue;
      const double gap = spec.dim() < 2 ? std::numeric_limits<double>::infinity() : detail::min_relative_gap(xi);
      if (gap > best.min_relative_gap) {
        best.min_relative_gap = gap;
        best.xi = std::move(xi);
        best.p0 = p0;
        best.p1 = p1;
        best.p2 = p0;
      }
    }
  }
  best.satisfied = best.min_relative_gap > gap_tol;
  return best;
}

inline nlohmann::json to_json(const ContrastivityReport& r) {
  auto pair = [](TimePair p) { return nlohmann::json::array({p.s, p.t}); };
  return {{"satisfied", r.satisfied},
          {"xi", r.xi},
          {"pairs", {pair(r.p0), pair(r.p1), pair(r.p2)}},
          {"min_relative_gap", r.min_relative_gap}};
}

// ---------------------------------------------------------------------------
// JSON configuration of a SourceSpec:
// {"kind":"ou","d":2,"steps":500,"horizon":1,"paths":128,"seed":42,
//  "theta":[1,2],"sigma":[1,1],...}   per-coordinate arrays, or scalars broadcast to all.

namespace detail {
inline std::vector<double> param_array(const nlohmann::json& j, const std::string& key, std::size_t d, double def) {
  if (!j.contains(key)) return std::vector<double>(d, def);
  const auto& v = j.at(key);
  if (v.is_number()) return std::vector<double>(d, v.get<double>());
  if (!v.is_array() || v.size() != d) throw ValidationError(key, "expected a number or an array of length d");
  return v.get<std::vector<double>>();
}
}  // namespace detail

inline SourceSpec source_spec_from_json(const nlohmann::json& j) {
  SourceSpec s;
  if (!j.contains("kind")) throw ValidationError("kind", "missing");
  s.kind = source_kind_from_string(j.at("kind").get<std::string>());
  if (!j.contains("d")) throw ValidationError("d", "missing");
  const auto d = j.at("d").get<std::size_t>();
  if (d == 0) throw ValidationError("d", "dimension must be positive");
  s.steps = j.value("steps", s.steps);
  s.horizon = j.value("horizon", s.horizon);
  s.n_paths = j.value("paths", s.n_paths);
  s.seed = j.value("seed", s.seed);
  s.coords.resize(d);
  auto fill = [&](const std::string& key, double def, auto member) {
    const auto vals = detail::param_array(j, key, d, def);
    for (std::size_t i = 0; i < d; ++i) s.coords[i].*member = vals[i];
  };
  fill("theta", 1.0, &CoordinateParams::theta);
  fill("sigma", 1.0, &CoordinateParams::sigma);
  fill("mu", 0.0, &CoordinateParams::mu);
  fill("alpha", 1.0, &CoordinateParams::alpha);
  fill("gamma", 1.0, &CoordinateParams::gamma);
  fill("hurst", 0.5, &CoordinateParams::hurst);
  fill("s0", 1.0, &CoordinateParams::s0);
  fill("vol_growth", 0.0, &CoordinateParams::vol_growth);
  fill("copula_theta", 2.0, &CoordinateParams::copula_theta);
  if (j.contains("start")) {
    const auto vals = detail::param_array(j, "start", d, 0.0);
    for (std::size_t i = 0; i < d; ++i) s.coords[i].start = vals[i];
  }
  if (j.contains("family")) {
    const auto& f = j.at("family");
    if (f.is_string()) {
      for (auto& c : s.coords) c.family = copula_family_from_string(f.get<std::string>());
    } else {
      if (!f.is_array() || f.size() != d) throw ValidationError("family", "expected a name or an array of length d");
      for (std::size_t i = 0; i < d; ++i) s.coords[i].family = copula_family_from_string(f[i].get<std::string>());
    }
  }
  validate(s);
  return s;
}

inline nlohmann::json to_json(const SourceSpec& s) {
  nlohmann::json j = {{"kind", to_string(s.kind)}, {"d", s.dim()},         {"steps", s.steps},
                      {"horizon", s.horizon},       {"paths", s.n_paths},   {"seed", s.seed}};
  auto col = [&](auto member) {
    std::vector<double> v;
    for (const auto& c : s.coords) v.push_back(c.*member);
    return v;
  };
  j["theta"] = col(&CoordinateParams::theta);
  j["sigma"] = col(&CoordinateParams::sigma);
  j["mu"] = col(&CoordinateParams::mu);
  j["alpha"] = col(&CoordinateParams::alpha);
  j["gamma"] = col(&CoordinateParams::gamma);
  j["hurst"] = col(&CoordinateParams::hurst);
  j["s0"] = col(&CoordinateParams::s0);
  j["vol_growth"] = col(&CoordinateParams::vol_growth);
  j["copula_theta"] = col(&CoordinateParams::copula_theta);
  std::vector<std::string> fam;
  for (const auto& c : s.coords) fam.push_back(to_string(c.family));
  j["family"] = fam;
  if (std::all_of(s.coords.begin(), s.coords.end(), [](const auto& c) { return c.start.has_value(); })) {
    std::vector<double> st;
    for (const auto& c : s.coords) st.push_back(*c.start);
    j["start"] = st;
  }
  return j;
}

}  // namespace signica
