#pragma once

// Minimization of theta -> contrast(g_theta(X)) over a candidate family: grid
// search, Nelder-Mead, and Adam on finite-difference gradients.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "mixing_maps.hpp"
#include "parallel.hpp"
#include "paths.hpp"
#include "rng.hpp"
#include "signature.hpp"

namespace signica {

/// theta -> contrast of the family member applied to the mixture ensemble.
struct Objective {
  PathEnsemble data;
  CandidateFamily family;
  ContrastOptions contrast;  // depth, mu, preprocessing
  double penalty = 1e6;

  void validate() const {
    if (contrast.mu > contrast.depth) throw ValidationError("mu", "mu exceeds depth");
    if (family.dim != data.dim) throw DimensionMismatch("candidate family dimension does not match the data");
    data.validate();
  }
};

struct Evaluation {
  double value = 0.0;
  bool penalized = false;
  std::string reason;  // empty unless penalized
};

/// Contrast of g_theta applied to `data`. Domain violations, degenerate
/// normalization, invalid parameters and non-finite values yield the penalty
/// with the flag set instead of an exception.
inline Evaluation objective_eval(const Objective& o, std::span<const double> theta, const PathEnsemble& data) {
  if (theta.size() != o.family.num_params) throw DimensionMismatch("theta has the wrong number of parameters");
  try {
    const ParamMap g = o.family.make(theta);
    const double v = contrast_ic(apply_map(g, data), o.contrast).value;
    if (!std::isfinite(v)) return {o.penalty, true, "non-finite contrast"};
    return {v, false, {}};
  } catch (const DomainError& e) {
    return {o.penalty, true, e.what()};
  } catch (const DegenerateNormalization& e) {
    return {o.penalty, true, e.what()};
  } catch (const ValidationError& e) {
    return {o.penalty, true, e.what()};
  }
}

inline Evaluation objective_eval(const Objective& o, std::span<const double> theta) {
  return objective_eval(o, theta, o.data);
}

struct TrajectoryPoint {
  std::size_t iteration = 0;
  double value = 0.0;
};

struct OptimizerReport {
  std::string method;
  std::vector<double> best_theta;
  double best_value = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> final_theta;
  std::vector<TrajectoryPoint> trajectory;
  std::size_t evaluations = 0;
  std::size_t iterations = 0;
  std::string stop_reason;
  double wall_time_ms = 0.0;  // not serialized: timings go to the manifest

  /// Records a value and keeps best_* consistent with the trajectory minimum.
  void record(std::size_t iteration, double value, std::span<const double> theta) {
    trajectory.push_back({iteration, value});
    if (!(value >= best_value)) {  // also true while best_value is NaN
      best_value = value;
      best_theta.assign(theta.begin(), theta.end());
    }
  }
};

inline nlohmann::json to_json(const OptimizerReport& r) {
  nlohmann::json traj = nlohmann::json::array();
  for (const auto& p : r.trajectory) traj.push_back({p.iteration, p.value});
  return {{"method", r.method},           {"best_theta", r.best_theta}, {"best_value", r.best_value},
          {"final_theta", r.final_theta}, {"evaluations", r.evaluations}, {"iterations", r.iterations},
          {"stop_reason", r.stop_reason}, {"trajectory", traj}};
}

inline OptimizerReport optimizer_report_from_json(const nlohmann::json& j) {
  OptimizerReport r;
  r.method = j.at("method").get<std::string>();
  r.best_theta = j.at("best_theta").get<std::vector<double>>();
  r.best_value = j.at("best_value").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                               : j.at("best_value").get<double>();
  r.final_theta = j.at("final_theta").get<std::vector<double>>();
  r.evaluations = j.at("evaluations").get<std::size_t>();
  r.iterations = j.at("iterations").get<std::size_t>();
  r.stop_reason = j.at("stop_reason").get<std::string>();
  for (const auto& p : j.at("trajectory")) r.trajectory.push_back({p.at(0).get<std::size_t>(), p.at(1).get<double>()});
  return r;
}

using ObjectiveFn = std::function<double(std::span<const double>)>;

namespace detail {
struct Stopwatch {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  }
};
}  // namespace detail

// ---------------------------------------------------------------------------
// Grid search.

/// Cartesian lattice; the first axis varies slowest.
struct ThetaGrid {
  std::vector<std::vector<double>> axes;

  std::size_t size() const {
    std::size_t n = 1;
    for (const auto& a : axes) n *= a.size();
    return axes.empty() ? 0 : n;
  }

  std::vector<double> point(std::size_t flat) const {
    std::vector<double> p(axes.size());
    for (std::size_t k = axes.size(); k-- > 0;) {
      p[k] = axes[k][flat % axes[k].size()];
      flat /= axes[k].size();
    }
    return p;
  }

  /// `n` points per axis on [center - half_width, center + half_width].
  static ThetaGrid centered(std::span<const double> center, double half_width, std::size_t n) {
    ThetaGrid g;
    for (double c : center) {
      std::vector<double> axis(n);
      for (std::size_t i = 0; i < n; ++i)
        axis[i] = n == 1 ? c : c - half_width + 2.0 * half_width * static_cast<double>(i) / static_cast<double>(n - 1);
      g.axes.push_back(std::move(axis));
    }
    return g;
  }
};

struct GridResult {
  ThetaGrid grid;
  std::vector<double> values;  // flat, same order as ThetaGrid::point
  std::vector<bool> penalized;

  std::size_t argmin() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
      if (values[i] < values[best]) best = i;
    return best;
  }
};

namespace detail {
inline std::pair<OptimizerReport, GridResult> grid_search_impl(
    const std::function<Evaluation(std::span<const double>)>& f, const ThetaGrid& grid) {
  if (grid.size() == 0) throw ValidationError("grid", "empty parameter grid");
  Stopwatch clock;
  GridResult res{grid, std::vector<double>(grid.size()), std::vector<bool>(grid.size(), false)};
  std::vector<char> flags(grid.size(), 0);
  parallel_for(grid.size(), [&](std::size_t i) {
    const Evaluation ev = f(grid.point(i));
    res.values[i] = ev.value;
    flags[i] = ev.penalized ? 1 : 0;
  });
  OptimizerReport rep;
  rep.method = "grid_search";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    res.penalized[i] = flags[i] != 0;
    rep.record(i, res.values[i], grid.point(i));
  }
  rep.final_theta = rep.best_theta;
  rep.evaluations = rep.iterations = grid.size();
  rep.stop_reason = "grid exhausted";
  rep.wall_time_ms = clock.ms();
  return {rep, res};
}
}  // namespace detail

/// Evaluates every lattice point (in parallel) and returns the first minimizer
/// in lattice order together with the full value grid.
inline std::pair<OptimizerReport, GridResult> grid_search(const ObjectiveFn& f, const ThetaGrid& grid) {
  return detail::grid_search_impl([&](std::span<const double> t) { return Evaluation{f(t), false, {}}; }, grid);
}

inline std::pair<OptimizerReport, GridResult> grid_search(const Objective& o, const ThetaGrid& grid) {
  o.validate();
  if (grid.axes.size() != o.family.num_params) throw DimensionMismatch("grid dimension does not match family");
  return detail::grid_search_impl([&](std::span<const double> t) { return objective_eval(o, t); }, grid);
}

/// CSV `theta1,theta2,<value_name>[,<extra_name>]` for two-parameter grids.
inline void write_grid_csv(std::ostream& os, const ThetaGrid& grid, const std::vector<std::string>& names,
                           const std::vector<const std::vector<double>*>& columns) {
  for (std::size_t k = 0; k < grid.axes.size(); ++k) os << (k ? "," : "") << "theta" << k + 1;
  for (const auto& n : names) os << ',' << n;
  os << '\n';
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto p = grid.point(i);
    for (std::size_t k = 0; k < p.size(); ++k) os << (k ? "," : "") << format_double(p[k]);
    for (const auto* col : columns) os << ',' << format_double((*col)[i]);
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Nelder-Mead.

struct NelderMeadOptions {
  std::size_t max_evals = 400;
  double initial_step = 0.1;  // simplex edge along each axis
  double tol = 1e-6;          // simplex diameter
};

inline OptimizerReport nelder_mead(const ObjectiveFn& f, std::vector<double> theta0, const NelderMeadOptions& opt) {
  const std::size_t n = theta0.size();
  if (n == 0 || n > 20) throw ValidationError("theta0", "Nelder-Mead supports 1 to 20 parameters");
  detail::Stopwatch clock;
  OptimizerReport rep;
  rep.method = "nelder_mead";
  rep.final_theta = theta0;
  if (opt.max_evals == 0) {
    rep.best_theta = theta0;
    rep.stop_reason = "max evaluations";
    return rep;
  }
  constexpr double kReflect = 1.0, kExpand = 2.0, kContract = 0.5, kShrink = 0.5;

  auto eval = [&](const std::vector<double>& x) {
    ++rep.evaluations;
    return f(x);
  };
  const double f0 = eval(theta0);
  if (!std::isfinite(f0)) throw DomainError("objective is not finite at theta0");

  std::vector<std::vector<double>> simplex{theta0};
  std::vector<double> fv{f0};
  for (std::size_t k = 0; k < n && rep.evaluations < opt.max_evals; ++k) {
    auto x = theta0;
    x[k] += opt.initial_step;
    fv.push_back(eval(x));
    simplex.push_back(std::move(x));
  }
  if (simplex.size() < n + 1) {
    rep.record(0, f0, theta0);
    rep.stop_reason = "max evaluations";
    rep.wall_time_ms = clock.ms();
    return rep;
  }

  std::vector<std::size_t> order(n + 1);
  auto sort_simplex = [&] {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    std::vector<std::vector<double>> s2;
    std::vector<double> f2;
    for (auto i : order) {
      s2.push_back(simplex[i]);
      f2.push_back(fv[i]);
    }
    simplex.swap(s2);
    fv.swap(f2);
  };
  auto diameter = [&] {
    double dmax = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += (simplex[i][k] - simplex[0][k]) * (simplex[i][k] - simplex[0][k]);
      dmax = std::max(dmax, std::sqrt(s));
    }
    return dmax;
  };
  auto along = [&](const std::vector<double>& c, const std::vector<double>& x, double coef) {
    std::vector<double> y(n);
    for (std::size_t k = 0; k < n; ++k) y[k] = c[k] + coef * (x[k] - c[k]);
    return y;
  };

  sort_simplex();
  rep.record(0, fv[0], simplex[0]);
  rep.stop_reason = "max evaluations";
  while (rep.evaluations < opt.max_evals) {
    if (diameter() < opt.tol) {
      rep.stop_reason = "simplex diameter below tolerance";
      break;
    }
    ++rep.iterations;
    std::vector<double> c(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < n; ++k) c[k] += simplex[i][k] / static_cast<double>(n);

    const auto xr = along(c, simplex[n], -kReflect);
    const double fr = eval(xr);
    if (fr < fv[0]) {
      if (rep.evaluations < opt.max_evals) {
        const auto xe = along(c, xr, kExpand);
        const double fe = eval(xe);
        if (fe < fr) {
          simplex[n] = xe;
          fv[n] = fe;
        } else {
          simplex[n] = xr;
          fv[n] = fr;
        }
      } else {
        simplex[n] = xr;
        fv[n] = fr;
      }
    } else if (fr < fv[n - 1]) {
      simplex[n] = xr;
      fv[n] = fr;
    } else if (rep.evaluations < opt.max_evals) {
      const bool outside = fr < fv[n];
      const auto xc = outside ? along(c, xr, kContract) : along(c, simplex[n], kContract);
      const double fc = eval(xc);
      if (outside ? fc <= fr : fc < fv[n]) {
        simplex[n] = xc;
        fv[n] = fc;
      } else {
        for (std::size_t i = 1; i <= n && rep.evaluations < opt.max_evals; ++i) {
          simplex[i] = along(simplex[0], simplex[i], kShrink);
          fv[i] = eval(simplex[i]);
        }
      }
    }
    sort_simplex();
    rep.record(rep.iterations, fv[0], simplex[0]);
  }
  if (rep.stop_reason == "max evaluations" && diameter() < opt.tol) rep.stop_reason = "simplex diameter below tolerance";
  rep.final_theta = simplex[0];
  rep.wall_time_ms = clock.ms();
  return rep;
}

inline OptimizerReport nelder_mead(const Objective& o, std::vector<double> theta0, const NelderMeadOptions& opt) {
  o.validate();
  if (theta0.size() != o.family.num_params) throw DimensionMismatch("theta0 has the wrong number of parameters");
  if (opt.max_evals > 0 && objective_eval(o, theta0).penalized)
    throw DomainError("objective is not finite at theta0");
  return nelder_mead([&](std::span<const double> t) { return objective_eval(o, t).value; }, std::move(theta0), opt);
}

// ---------------------------------------------------------------------------
// Adam on central finite-difference gradients.

struct SgdOptions {
  double lr = 0.01;
  std::size_t iters = 200;
  std::size_t batch = 64;      // paths per step (0 or >= N: full ensemble)
  double fd_step = 1e-4;       // relative: h_k = fd_step * max(1, |theta_k|)
  double l2 = 1e-4;            // penalty l2 * |theta|^2 added to the objective
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  double divergence = 1e8;
};

/// Per-iteration objective: called once per step to fix the batch, then
/// evaluated at theta and at the 2p finite-difference points.
using BatchObjectiveFactory = std::function<ObjectiveFn(std::size_t iteration)>;

inline OptimizerReport sgd_fd(const BatchObjectiveFactory& factory, std::vector<double> theta,
                              const SgdOptions& opt) {
  const std::size_t p = theta.size();
  for (double t : theta)
    if (!std::isfinite(t)) throw ValidationError("theta0", "initial parameters must be finite");
  detail::Stopwatch clock;
  OptimizerReport rep;
  rep.method = "sgd_fd";
  rep.stop_reason = "iteration limit";
  std::vector<double> m(p, 0.0), v(p, 0.0), grad(p), vals(2 * p + 1);
  auto l2 = [&](std::span<const double> t) {
    double s = 0.0;
    for (double x : t) s += x * x;
    return opt.l2 * s;
  };

  for (std::size_t it = 0; it < opt.iters; ++it) {
    const ObjectiveFn f = factory(it);
    parallel_for(2 * p + 1, [&](std::size_t slot) {
      std::vector<double> x = theta;
      if (slot > 0) {
        const std::size_t k = (slot - 1) / 2;
        const double h = opt.fd_step * std::max(1.0, std::abs(theta[k]));
        x[k] += (slot % 2 == 1) ? h : -h;
      }
      vals[slot] = f(x) + l2(x);
    });
    rep.evaluations += 2 * p + 1;
    rep.iterations = it + 1;
    rep.record(it, vals[0], theta);
    if (!(vals[0] <= opt.divergence)) {
      rep.stop_reason = "diverged";
      break;
    }
    for (std::size_t k = 0; k < p; ++k) {
      const double h = opt.fd_step * std::max(1.0, std::abs(theta[k]));
      grad[k] = (vals[2 * k + 1] - vals[2 * k + 2]) / (2.0 * h);
    }
    const double b1t = 1.0 - std::pow(opt.beta1, static_cast<double>(it + 1));
    const double b2t = 1.0 - std::pow(opt.beta2, static_cast<double>(it + 1));
    for (std::size_t k = 0; k < p; ++k) {
      m[k] = opt.beta1 * m[k] + (1.0 - opt.beta1) * grad[k];
      v[k] = opt.beta2 * v[k] + (1.0 - opt.beta2) * grad[k] * grad[k];
      theta[k] -= opt.lr * (m[k] / b1t) / (std::sqrt(v[k] / b2t) + opt.adam_eps);
    }
  }
  rep.final_theta = theta;
  rep.wall_time_ms = clock.ms();
  return rep;
}

/// Path batch for one iteration: `batch` distinct indices drawn from the
/// subsampling stream, sorted.
inline std::vector<std::size_t> batch_indices(std::size_t n_paths, std::size_t batch, std::uint64_t stream,
                                              std::size_t iteration) {
  std::vector<std::size_t> idx(n_paths);
  std::iota(idx.begin(), idx.end(), 0);
  if (batch == 0 || batch >= n_paths) return idx;
  Engine rng(derive_seed(stream, {iteration}));
  for (std::size_t i = 0; i < batch; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n_paths - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(batch);
  std::sort(idx.begin(), idx.end());
  return idx;
}

/// Adam on the contrast with per-iteration path batches from `subsampling_seed`.
inline OptimizerReport sgd_fd(const Objective& o, std::vector<double> theta0, const SgdOptions& opt,
                              std::uint64_t subsampling_seed) {
  o.validate();
  if (theta0.size() != o.family.num_params) throw DimensionMismatch("theta0 has the wrong number of parameters");
  return sgd_fd(
      [&](std::size_t it) -> ObjectiveFn {
        auto batch = std::make_shared<PathEnsemble>(
            o.data.subset(batch_indices(o.data.num_paths(), opt.batch, subsampling_seed, it)));
        return [&o, batch](std::span<const double> t) { return objective_eval(o, t, *batch).value; };
      },
      std::move(theta0), opt);
}

// ---------------------------------------------------------------------------
// Options as JSON.

inline NelderMeadOptions nelder_mead_options_from_json(const nlohmann::json& j) {
  NelderMeadOptions o;
  o.max_evals = j.value("max_evals", o.max_evals);
  o.initial_step = j.value("initial_step", o.initial_step);
  o.tol = j.value("tol", o.tol);
  return o;
}

inline nlohmann::json to_json(const NelderMeadOptions& o) {
  return {{"max_evals", o.max_evals}, {"initial_step", o.initial_step}, {"tol", o.tol}};
}

inline SgdOptions sgd_options_from_json(const nlohmann::json& j) {
  SgdOptions o;
  o.lr = j.value("lr", o.lr);
  o.iters = j.value("iters", o.iters);
  o.batch = j.value("batch", o.batch);
  o.fd_step = j.value("fd_step", o.fd_step);
  o.l2 = j.value("l2", o.l2);
  if (!(o.lr >= 0.0)) throw ValidationError("lr", "learning rate must be non-negative");
  if (!(o.fd_step > 0.0)) throw ValidationError("fd_step", "finite-difference step must be positive");
  return o;
}

inline nlohmann::json to_json(const SgdOptions& o) {
  return {{"lr", o.lr}, {"iters", o.iters}, {"batch", o.batch}, {"fd_step", o.fd_step}, {"l2", o.l2}};
}

}  // namespace signica
