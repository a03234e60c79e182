#pragma once

// Parametrized maps R^d -> R^d used as mixing transformations and as demixing
// candidates, together with the monomial-transformation test.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "parallel.hpp"
#include "paths.hpp"
#include "rng.hpp"

namespace signica {

/// A map x -> g_theta(x) on R^d. `eval` returns false when x lies outside the
/// map's domain. The Jacobian is analytic when provided, otherwise central
/// differences with step 1e-5. Instances are immutable and thread-safe.
class ParamMap {
 public:
  using EvalFn = std::function<bool(std::span<const double>, std::span<double>)>;
  using JacobianFn = std::function<void(std::span<const double>, std::span<double>)>;  // row-major d x d
  using InverseFn = std::function<ParamMap()>;

  ParamMap(std::string family, std::vector<double> params, std::size_t dim, EvalFn eval,
           JacobianFn jacobian = {}, InverseFn inverse = {}, nlohmann::json extra = nlohmann::json::object())
      : family_(std::move(family)),
        params_(std::move(params)),
        dim_(dim),
        eval_(std::move(eval)),
        jacobian_(std::move(jacobian)),
        inverse_(std::move(inverse)),
        extra_(std::move(extra)) {}

  const std::string& family() const noexcept { return family_; }
  const std::vector<double>& params() const noexcept { return params_; }
  std::size_t dim() const noexcept { return dim_; }
  const nlohmann::json& extra() const noexcept { return extra_; }

  bool has_inverse() const noexcept { return static_cast<bool>(inverse_); }
  bool has_analytic_jacobian() const noexcept { return static_cast<bool>(jacobian_); }

  ParamMap inverse() const {
    if (!inverse_) throw Unsupported("family '" + family_ + "' has no analytic inverse");
    return inverse_();
  }

  /// Evaluates into `out`; false when `x` is outside the domain or the result is not finite.
  bool try_apply(std::span<const double> x, std::span<double> out) const {
    if (!eval_(x, out)) return false;
    return std::all_of(out.begin(), out.end(), [](double v) { return std::isfinite(v); });
  }

  std::vector<double> operator()(std::span<const double> x) const {
    if (x.size() != dim_) throw DimensionMismatch("point dimension does not match map");
    std::vector<double> out(dim_);
    if (!try_apply(x, out)) throw DomainError("point outside the domain of '" + family_ + "'");
    return out;
  }
  std::vector<double> operator()(std::initializer_list<double> x) const {
    return (*this)(std::span<const double>(x.begin(), x.size()));
  }

  /// Row-major Jacobian at x.
  std::vector<double> jacobian(std::span<const double> x, double step = 1e-5) const {
    std::vector<double> jac(dim_ * dim_);
    if (jacobian_) {
      jacobian_(x, jac);
      return jac;
    }
    std::vector<double> xp(x.begin(), x.end()), xm(x.begin(), x.end()), fp(dim_), fm(dim_);
    for (std::size_t c = 0; c < dim_; ++c) {
      xp[c] = x[c] + step;
      xm[c] = x[c] - step;
      if (!try_apply(xp, fp) || !try_apply(xm, fm)) throw DomainError("finite-difference stencil leaves the domain");
      for (std::size_t r = 0; r < dim_; ++r) jac[r * dim_ + c] = (fp[r] - fm[r]) / (2.0 * step);
      xp[c] = xm[c] = x[c];
    }
    return jac;
  }

 private:
  std::string family_;
  std::vector<double> params_;
  std::size_t dim_;
  EvalFn eval_;
  JacobianFn jacobian_;
  InverseFn inverse_;
  nlohmann::json extra_;
};

// ---------------------------------------------------------------------------
// Families.

inline ParamMap identity_map(std::size_t d) {
  return ParamMap(
      "identity", {}, d,
      [](std::span<const double> x, std::span<double> y) {
        std::copy(x.begin(), x.end(), y.begin());
        return true;
      },
      [d](std::span<const double>, std::span<double> j) {
        std::fill(j.begin(), j.end(), 0.0);
        for (std::size_t i = 0; i < d; ++i) j[i * d + i] = 1.0;
      },
      [d] { return identity_map(d); });
}

/// x -> A x + b with A given row-major.
inline ParamMap linear_map(std::size_t d, std::vector<double> a, std::vector<double> b = {}) {
  if (a.size() != d * d) throw ValidationError("params", "linear map needs d*d matrix entries");
  if (b.empty()) b.assign(d, 0.0);
  if (b.size() != d) throw ValidationError("params", "linear offset needs d entries");
  std::vector<double> params = a;
  params.insert(params.end(), b.begin(), b.end());
  auto eval = [d, a, b](std::span<const double> x, std::span<double> y) {
    for (std::size_t r = 0; r < d; ++r) {
      double s = b[r];
      for (std::size_t c = 0; c < d; ++c) s += a[r * d + c] * x[c];
      y[r] = s;
    }
    return true;
  };
  auto jac = [a](std::span<const double>, std::span<double> j) { std::copy(a.begin(), a.end(), j.begin()); };
  auto inv = [d, a, b] {
    Eigen::MatrixXd m(d, d);
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < d; ++c) m(r, c) = a[r * d + c];
    Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
    if (!lu.isInvertible()) throw DomainError("linear map is singular");
    const Eigen::MatrixXd mi = lu.inverse();
    Eigen::VectorXd bv(d);
    for (std::size_t r = 0; r < d; ++r) bv(r) = b[r];
    const Eigen::VectorXd bi = -mi * bv;
    std::vector<double> ai(d * d), bo(d);
    for (std::size_t r = 0; r < d; ++r) {
      bo[r] = bi(r);
      for (std::size_t c = 0; c < d; ++c) ai[r * d + c] = mi(r, c);
    }
    return linear_map(d, ai, bo);
  };
  return ParamMap("linear", std::move(params), d, eval, jac, inv);
}

ParamMap henon_inverse_map(double a, double b);

/// Classical Henon map (x, y) -> (1 - a x^2 + y, b x), b != 0.
inline ParamMap henon_map(double a, double b) {
  if (b == 0.0 || !std::isfinite(a) || !std::isfinite(b)) throw ValidationError("params", "Henon map needs b != 0");
  return ParamMap(
      "henon", {a, b}, 2,
      [a, b](std::span<const double> x, std::span<double> y) {
        y[0] = 1.0 - a * x[0] * x[0] + x[1];
        y[1] = b * x[0];
        return true;
      },
      [a, b](std::span<const double> x, std::span<double> j) {
        j[0] = -2.0 * a * x[0];
        j[1] = 1.0;
        j[2] = b;
        j[3] = 0.0;
      },
      [a, b] { return henon_inverse_map(a, b); });
}

/// Inverse of the Henon map: (x, y) -> (y/b, x - 1 + a (y/b)^2).
inline ParamMap henon_inverse_map(double a, double b) {
  if (b == 0.0 || !std::isfinite(a) || !std::isfinite(b)) throw ValidationError("params", "Henon map needs b != 0");
  return ParamMap(
      "henon_inverse", {a, b}, 2,
      [a, b](std::span<const double> x, std::span<double> y) {
        const double u = x[1] / b;
        y[0] = u;
        y[1] = x[0] - 1.0 + a * u * u;
        return true;
      },
      [a, b](std::span<const double> x, std::span<double> j) {
        j[0] = 0.0;
        j[1] = 1.0 / b;
        j[2] = 1.0;
        j[3] = 2.0 * a * x[1] / (b * b);
      },
      [a, b] { return henon_map(a, b); });
}

ParamMap henon_shear_inverse_map(double p, double q);

/// Composition of two Henon-type shears, (x, y) -> (u, y + q u^2) with u = x + p y^2.
/// Invertible for all (p, q) with polynomial inverse; both parameters are
/// identifiable, unlike the scale-redundant parametrization of the classical map.
inline ParamMap henon_shear_map(double p, double q) {
  if (!std::isfinite(p) || !std::isfinite(q)) throw ValidationError("params", "shear parameters must be finite");
  return ParamMap(
      "henon_shear", {p, q}, 2,
      [p, q](std::span<const double> x, std::span<double> y) {
        const double u = x[0] + p * x[1] * x[1];
        y[0] = u;
        y[1] = x[1] + q * u * u;
        return true;
      },
      [p, q](std::span<const double> x, std::span<double> j) {
        const double u = x[0] + p * x[1] * x[1];
        j[0] = 1.0;
        j[1] = 2.0 * p * x[1];
        j[2] = 2.0 * q * u;
        j[3] = 1.0 + 4.0 * q * u * p * x[1];
      },
      [p, q] { return henon_shear_inverse_map(p, q); });
}

/// Inverse shear composition: (u, v) -> (u - p y^2, y) with y = v - q u^2.
inline ParamMap henon_shear_inverse_map(double p, double q) {
  if (!std::isfinite(p) || !std::isfinite(q)) throw ValidationError("params", "shear parameters must be finite");
  return ParamMap(
      "henon_shear_inverse", {p, q}, 2,
      [p, q](std::span<const double> x, std::span<double> y) {
        const double v = x[1] - q * x[0] * x[0];
        y[0] = x[0] - p * v * v;
        y[1] = v;
        return true;
      },
      [p, q](std::span<const double> x, std::span<double> j) {
        const double v = x[1] - q * x[0] * x[0];
        j[0] = 1.0 + 4.0 * p * v * q * x[0];
        j[1] = -2.0 * p * v;
        j[2] = -2.0 * q * x[0];
        j[3] = 1.0;
      },
      [p, q] { return henon_shear_map(p, q); });
}

/// Moebius transformation of the plane read as C: z -> (a z + b) / (c z + d),
/// real coefficients, ad - bc != 0. Points with |c z + d| < 1e-9 are outside the domain.
inline ParamMap moebius_map(double a, double b, double c, double d) {
  const double det = a * d - b * c;
  if (!(std::abs(det) > 0.0) || !std::isfinite(det)) throw ValidationError("params", "Moebius map needs ad - bc != 0");
  using C = std::complex<double>;
  return ParamMap(
      "moebius", {a, b, c, d}, 2,
      [a, b, c, d](std::span<const double> x, std::span<double> y) {
        const C z(x[0], x[1]);
        const C den = c * z + d;
        if (std::abs(den) < 1e-9) return false;
        const C w = (a * z + b) / den;
        y[0] = w.real();
        y[1] = w.imag();
        return true;
      },
      [a, b, c, d, det](std::span<const double> x, std::span<double> j) {
        const C z(x[0], x[1]);
        const C den = c * z + d;
        const C fp = det / (den * den);  // holomorphic: Jacobian is [[Re, -Im], [Im, Re]]
        j[0] = fp.real();
        j[1] = -fp.imag();
        j[2] = fp.imag();
        j[3] = fp.real();
      },
      [a, b, c, d] { return moebius_map(d, -b, -c, a); });
}

// ---------------------------------------------------------------------------
// Feedforward networks.

enum class Activation { tanh, leaky_relu, identity };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::identity: return "identity";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  for (auto a : {Activation::tanh, Activation::leaky_relu, Activation::identity})
    if (to_string(a) == s) return a;
  throw ValidationError("activations", "unknown activation '" + s + "'");
}

/// Layer widths (input first, output last), one activation per hidden layer;
/// the output layer is affine. Parameters are stored per layer as the weight
/// matrix (row-major, out x in) followed by the bias.
struct MLPShape {
  std::vector<std::size_t> layers;
  std::vector<Activation> activations;
  double leaky_slope = 0.01;

  std::size_t num_params() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) n += layers[l + 1] * (layers[l] + 1);
    return n;
  }

  void validate() const {
    if (layers.size() < 2) throw ValidationError("layers", "need input and output widths");
    if (layers.front() != layers.back()) throw ValidationError("layers", "input and output width must both equal d");
    if (activations.size() != layers.size() - 2)
      throw ValidationError("activations", "need one activation per hidden layer");
    for (auto w : layers)
      if (w == 0) throw ValidationError("layers", "widths must be positive");
  }
};

/// Desk-scale demixer shapes: d = 2 uses hidden widths (4, 32) with tanh; other
/// dimensions one leaky-ReLU hidden layer of min(16, 4d) units.
inline MLPShape default_mlp_shape(std::size_t d) {
  if (d == 2) return MLPShape{{2, 4, 32, 2}, {Activation::tanh, Activation::tanh}, 0.01};
  return MLPShape{{d, std::min<std::size_t>(16, 4 * d), d}, {Activation::leaky_relu}, 0.01};
}

inline ParamMap mlp_map(const MLPShape& shape, std::vector<double> params) {
  shape.validate();
  if (params.size() != shape.num_params())
    throw ValidationError("params", "MLP expects " + std::to_string(shape.num_params()) + " parameters, got " +
                                        std::to_string(params.size()));
  nlohmann::json extra = {{"layers", shape.layers}, {"leaky_slope", shape.leaky_slope}};
  std::vector<std::string> acts;
  for (auto a : shape.activations) acts.push_back(to_string(a));
  extra["activations"] = acts;
  const std::size_t d = shape.layers.front();
  auto w = std::make_shared<const std::vector<double>>(params);
  auto eval = [shape, w](std::span<const double> x, std::span<double> y) {
    std::vector<double> cur(x.begin(), x.end()), next;
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < shape.layers.size(); ++l) {
      const std::size_t in = shape.layers[l], out = shape.layers[l + 1];
      next.assign(out, 0.0);
      const double* wm = w->data() + off;
      const double* bias = wm + out * in;
      for (std::size_t r = 0; r < out; ++r) {
        double s = bias[r];
        for (std::size_t c = 0; c < in; ++c) s += wm[r * in + c] * cur[c];
        next[r] = s;
      }
      off += out * (in + 1);
      if (l + 2 < shape.layers.size()) {
        const Activation act = shape.activations[l];
        for (double& v : next) {
          if (act == Activation::tanh) v = std::tanh(v);
          else if (act == Activation::leaky_relu) v = v > 0.0 ? v : shape.leaky_slope * v;
        }
      }
      cur.swap(next);
    }
    std::copy(cur.begin(), cur.end(), y.begin());
    return true;
  };
  return ParamMap("mlp", std::move(params), d, eval, {}, {}, extra);
}

/// Glorot-uniform weights and zero biases from the given seed.
inline std::vector<double> mlp_initial_params(const MLPShape& shape, std::uint64_t seed) {
  shape.validate();
  Engine rng(seed);
  std::vector<double> p;
  for (std::size_t l = 0; l + 1 < shape.layers.size(); ++l) {
    const std::size_t in = shape.layers[l], out = shape.layers[l + 1];
    const double lim = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-lim, lim);
    for (std::size_t k = 0; k < in * out; ++k) p.push_back(u(rng));
    for (std::size_t k = 0; k < out; ++k) p.push_back(0.0);
  }
  return p;
}

// ---------------------------------------------------------------------------
// JSON: {"family":"henon","params":[a,b]}; MLPs add "layers", "activations",
// "leaky_slope" as the shape header for the flat parameter array.

inline nlohmann::json to_json(const ParamMap& m) {
  nlohmann::json j = {{"family", m.family()}, {"params", m.params()}};
  if (m.family() == "identity" || m.family() == "linear") j["d"] = m.dim();
  for (const auto& [k, v] : m.extra().items()) j[k] = v;
  return j;
}

inline MLPShape mlp_shape_from_json(const nlohmann::json& j) {
  MLPShape s;
  if (!j.contains("layers")) throw ValidationError("layers", "missing MLP layer widths");
  s.layers = j.at("layers").get<std::vector<std::size_t>>();
  if (j.contains("activations"))
    for (const auto& a : j.at("activations")) s.activations.push_back(activation_from_string(a.get<std::string>()));
  s.leaky_slope = j.value("leaky_slope", 0.01);
  s.validate();
  return s;
}

/// Builds a family member from its name, parameter vector and (for identity,
/// linear and mlp) the extra shape fields of `j`.
inline ParamMap make_map(const std::string& family, const std::vector<double>& p, const nlohmann::json& j = {}) {
  auto need = [&](std::size_t n) {
    if (p.size() != n)
      throw ValidationError("params", "family '" + family + "' expects " + std::to_string(n) + " parameters");
  };
  if (family == "identity") {
    const std::size_t d = j.is_object() ? j.value("d", std::size_t{2}) : 2;
    return identity_map(d);
  }
  if (family == "linear") {
    const std::size_t d = j.is_object() && j.contains("d") ? j.at("d").get<std::size_t>()
                                                          : static_cast<std::size_t>(std::sqrt(double(p.size())));
    if (p.size() == d * d) return linear_map(d, p);
    need(d * d + d);
    return linear_map(d, {p.begin(), p.begin() + static_cast<std::ptrdiff_t>(d * d)},
                      {p.begin() + static_cast<std::ptrdiff_t>(d * d), p.end()});
  }
  if (family == "henon") return need(2), henon_map(p[0], p[1]);
  if (family == "henon_inverse") return need(2), henon_inverse_map(p[0], p[1]);
  if (family == "henon_shear") return need(2), henon_shear_map(p[0], p[1]);
  if (family == "henon_shear_inverse") return need(2), henon_shear_inverse_map(p[0], p[1]);
  if (family == "moebius") return need(4), moebius_map(p[0], p[1], p[2], p[3]);
  if (family == "mlp") return mlp_map(mlp_shape_from_json(j), p);
  throw ValidationError("family", "unknown family '" + family + "'");
}

inline ParamMap param_map_from_json(const nlohmann::json& j) {
  if (!j.contains("family")) throw ValidationError("family", "missing");
  const auto params = j.value("params", std::vector<double>{});
  return make_map(j.at("family").get<std::string>(), params, j);
}

/// A parametrized family theta -> g_theta, the search space of the optimizers.
struct CandidateFamily {
  std::string name;
  std::size_t num_params = 0;
  std::size_t dim = 0;
  std::function<ParamMap(std::span<const double>)> make;
};

inline CandidateFamily candidate_family(const std::string& name, std::size_t d, const nlohmann::json& j = {}) {
  if (name == "mlp") {
    const MLPShape shape = (j.is_object() && j.contains("layers")) ? mlp_shape_from_json(j) : default_mlp_shape(d);
    if (shape.layers.front() != d) throw ValidationError("layers", "MLP width does not match data dimension");
    return {name, shape.num_params(), d,
            [shape](std::span<const double> t) { return mlp_map(shape, {t.begin(), t.end()}); }};
  }
  if (name == "linear")
    return {name, d * d, d, [d](std::span<const double> t) { return linear_map(d, {t.begin(), t.end()}); }};
  std::size_t n = 0;
  if (name == "henon" || name == "henon_inverse" || name == "henon_shear" || name == "henon_shear_inverse") n = 2;
  else if (name == "moebius") n = 4;
  else throw ValidationError("family", "unknown candidate family '" + name + "'");
  if (d != 2) throw ValidationError("family", "family '" + name + "' acts on the plane only");
  return {name, n, 2, [name](std::span<const double> t) { return make_map(name, {t.begin(), t.end()}); }};
}

// ---------------------------------------------------------------------------

/// Pointwise image of every path node; the image is again read piecewise-linearly.
/// Throws DomainError naming the first offending (path, time index).
inline PathEnsemble apply_map(const ParamMap& m, const PathEnsemble& e) {
  if (m.dim() != e.dim) throw DimensionMismatch("map dimension does not match ensemble");
  PathEnsemble out = e;
  const std::size_t n = e.num_times(), d = e.dim;
  constexpr std::size_t kOk = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> bad(e.num_paths(), kOk);
  parallel_for(e.num_paths(), [&](std::size_t p) {
    std::span<const double> src(e.paths[p]);
    std::span<double> dst(out.paths[p]);
    for (std::size_t k = 0; k < n; ++k) {
      if (!m.try_apply(src.subspan(k * d, d), dst.subspan(k * d, d))) {
        bad[p] = k;
        return;
      }
    }
  });
  for (std::size_t p = 0; p < bad.size(); ++p)
    if (bad[p] != kOk)
      throw DomainError("map '" + m.family() + "' undefined at path " + std::to_string(p) + ", time index " +
                        std::to_string(bad[p]));
  return out;
}

struct MonomialCheck {
  bool is_monomial = false;
  std::optional<std::vector<std::size_t>> permutation;  // output i depends on input permutation[i]
};

/// True iff at every grid point the Jacobian has exactly one entry per row and
/// per column with magnitude above tol, always in the same permutation pattern.
/// Throws DomainError at a point with (numerically) singular Jacobian.
inline MonomialCheck monomial_check(const ParamMap& m, const std::vector<std::vector<double>>& grid, double tol) {
  const std::size_t d = m.dim();
  MonomialCheck result;
  std::optional<std::vector<std::size_t>> pattern;
  for (const auto& x : grid) {
    if (x.size() != d) throw DimensionMismatch("grid point dimension does not match map");
    const auto jac = m.jacobian(x);
    Eigen::MatrixXd jm(d, d);
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < d; ++c) jm(r, c) = jac[r * d + c];
    if (std::abs(jm.determinant()) < 1e-12) throw DomainError("singular Jacobian at a grid point");
    std::vector<std::size_t> perm(d);
    std::vector<int> col_hits(d, 0);
    for (std::size_t r = 0; r < d; ++r) {
      int hits = 0;
      for (std::size_t c = 0; c < d; ++c)
        if (std::abs(jm(r, c)) > tol) {
          ++hits;
          ++col_hits[c];
          perm[r] = c;
        }
      if (hits != 1) return result;
    }
    if (std::any_of(col_hits.begin(), col_hits.end(), [](int h) { return h != 1; })) return result;
    if (pattern && *pattern != perm) return result;
    pattern = perm;
  }
  result.is_monomial = pattern.has_value();
  result.permutation = pattern;
  return result;
}

/// Regular tensor grid with `n` points per axis on the box [lo, hi]^d.
inline std::vector<std::vector<double>> box_grid(std::size_t d, double lo, double hi, std::size_t n) {
  std::vector<std::vector<double>> pts;
  std::vector<std::size_t> idx(d, 0);
  for (;;) {
    std::vector<double> p(d);
    for (std::size_t c = 0; c < d; ++c)
      p[c] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(idx[c]) / static_cast<double>(n - 1);
    pts.push_back(std::move(p));
    std::size_t c = 0;
    while (c < d && ++idx[c] == n) idx[c++] = 0;
    if (c == d) break;
  }
  return pts;
}

}  // namespace signica
