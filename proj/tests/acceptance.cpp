// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Long pipelines go through the CLI binary so that --threads is exercised for real.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "signica/experiment.hpp"

using namespace signica;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail, double seconds) {
  if (!ok) ++failures;
  std::ostringstream os;
  os.precision(1);
  os << std::fixed << seconds;
  std::cout << (ok ? "PASS" : "FAIL") << "  criterion " << id << "  " << name << "  (" << detail << "; " << os.str()
            << " s)" << std::endl;
}

// Runs f, which fills `detail` and returns pass/fail; exceptions count as failures.
void criterion(int id, const std::string& name, double budget_s, const std::function<bool(std::ostream&)>& f) {
  const auto t0 = std::chrono::steady_clock::now();
  std::ostringstream detail;
  bool ok = false;
  try {
    ok = f(detail);
  } catch (const std::exception& e) {
    detail << "exception: " << e.what();
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (s > budget_s) {
    detail << "; over the " << budget_s << " s budget";
    ok = false;
  }
  report(id, name, ok, detail.str(), s);
}

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(4);
  os << x;
  return os.str();
}

int cli(const std::string& args) {
  const std::string cmd = std::string(SIGNICA_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

SamplePath random_path(std::size_t d, std::size_t segments, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 0.4);
  SamplePath p{d, {}, {}};
  for (std::size_t k = 0; k <= segments; ++k) {
    p.times.push_back(static_cast<double>(k));
    for (std::size_t c = 0; c < d; ++c) p.values.push_back(k == 0 ? n(rng) : p.values[(k - 1) * d + c] + n(rng));
  }
  return p;
}

SamplePath slice(const SamplePath& p, std::size_t from, std::size_t to) {
  SamplePath s{p.dim, {}, {}};
  for (std::size_t k = from; k <= to; ++k) {
    s.times.push_back(p.times[k]);
    for (std::size_t c = 0; c < p.dim; ++c) s.values.push_back(p.at(k, c));
  }
  return s;
}

std::vector<Word> all_words(std::size_t d, std::size_t max_len) {
  std::vector<Word> out;
  for (std::size_t m = 1; m <= max_len; ++m)
    for (auto& w : words_of_length(d, m)) out.push_back(w);
  return out;
}

std::vector<WeightedPoint> product_atoms() {
  std::vector<WeightedPoint> atoms;
  for (auto [x, px] : {std::pair{0.0, 0.3}, {1.0, 0.7}})
    for (auto [y, py] : {std::pair{0.0, 0.6}, {2.0, 0.4}}) atoms.push_back({{x, y}, px * py});
  return atoms;
}

std::vector<WeightedPoint> coupled_atoms() { return {{{1, 1}, 0.5}, {{-1, -1}, 0.5}}; }

SourceSpec ou_fixed_start(std::size_t paths, std::size_t steps, std::uint64_t seed) {
  SourceSpec s;
  s.coords.assign(2, CoordinateParams{});
  s.coords[0].theta = 1.0;
  s.coords[1].theta = 5.0;
  for (auto& c : s.coords) c.start = 0.0;
  s.n_paths = paths;
  s.steps = steps;
  s.seed = seed;
  return s;
}

// Population Kendall tau 4 E[C(U,V)] - 1 by midpoint integration of the copula density.
double kendall_tau_by_integration(CopulaFamily f, double theta, std::size_t n) {
  const double h = 1.0 / static_cast<double>(n);
  std::vector<double> mass(n * n), cdf(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      mass[i * n + j] = copula_density(f, theta, (i + 0.5) * h, (j + 0.5) * h) * h * h;
      cdf[i * n + j] = mass[i * n + j] + (i > 0 ? cdf[(i - 1) * n + j] : 0.0) + (j > 0 ? cdf[i * n + j - 1] : 0.0) -
                       (i > 0 && j > 0 ? cdf[(i - 1) * n + j - 1] : 0.0);
    }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double bl = (i > 0 && j > 0) ? cdf[(i - 1) * n + j - 1] : 0.0;
      const double col = (i > 0) ? cdf[(i - 1) * n + j] - bl : 0.0;
      const double row = (j > 0) ? cdf[i * n + j - 1] - bl : 0.0;
      total += (bl + 0.5 * col + 0.5 * row + 0.25 * mass[i * n + j]) * mass[i * n + j];
    }
  return 4.0 * total - 1.0;
}

double ks_normal(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double dmax = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = normal_cdf(x[i]);
    dmax = std::max({dmax, std::abs(f - i / n), std::abs((i + 1) / n - f)});
  }
  return dmax;
}

struct GridRow {
  double t1, t2, phi, delta;
};

std::vector<GridRow> read_grid(const fs::path& file) {
  std::ifstream is(file);
  std::string line;
  std::getline(is, line);
  std::vector<GridRow> rows;
  while (std::getline(is, line)) {
    GridRow r{};
    char c;
    std::istringstream ls(line);
    ls >> r.t1 >> c >> r.t2 >> c >> r.phi >> c >> r.delta;
    rows.push_back(r);
  }
  return rows;
}

// Byte comparison of two artifact bundles; the manifest is compared without its timings.
bool same_bundle(const fs::path& a, const fs::path& b, std::ostream& why) {
  auto ma = nlohmann::json::parse(slurp(a / "manifest.json")), mb = nlohmann::json::parse(slurp(b / "manifest.json"));
  for (const auto& name : ma.at("artifact_paths")) {
    const auto n = name.get<std::string>();
    if (n != "manifest.json" && slurp(a / n) != slurp(b / n)) {
      why << n << " differs in " << a.filename().string() << "; ";
      return false;
    }
  }
  ma.erase("stage_timings_ms");
  mb.erase("stage_timings_ms");
  if (ma != mb) why << "manifest differs; ";
  return ma == mb;
}

}  // namespace

int main() {
  const fs::path work = fs::current_path() / "acceptance_out";
  fs::remove_all(work);
  fs::create_directories(work);
  const std::string configs = SIGNICA_CONFIG_DIR;

  criterion(1, "shuffle identity", 5.0, [](std::ostream& d) {
    std::mt19937_64 rng(101);
    const auto words = all_words(3, 5);
    double worst = 0.0;
    std::size_t pairs = 0;
    for (int trial = 0; trial < 3; ++trial) {
      const auto s = path_signature(random_path(3, 20, rng), 6);
      for (const auto& u : words)
        for (const auto& v : words) {
          if (u.size() + v.size() > 6) continue;
          double rhs = 0.0;
          for (const auto& w : shuffle(u, v)) rhs += s[w];
          worst = std::max(worst, std::abs(s[u] * s[v] - rhs));
          ++pairs;
        }
    }
    d << pairs << " pairs, max abs err " << fmt(worst);
    return worst < 1e-9;
  });

  criterion(2, "Chen identity and log/exp roundtrip", 2.0, [](std::ostream& d) {
    std::mt19937_64 rng(202);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    double chen = 0.0, logexp = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const auto p = random_path(3, 12, rng);
      const std::size_t cut = 1 + static_cast<std::size_t>(trial) % 11;
      const auto whole = path_signature(p, 5);
      const auto joined = path_signature(slice(p, 0, cut), 5) * path_signature(slice(p, cut, 12), 5);
      chen = std::max(chen, joined.max_abs_diff(whole));
      TensorSeries x(3, 5);
      for (std::size_t m = 1; m <= 5; ++m)
        for (double& v : x.level(m)) v = u(rng);
      logexp = std::max(logexp, log_series(exp_series(x)).max_abs_diff(x));
    }
    d << "Chen " << fmt(chen) << ", log(exp) " << fmt(logexp);
    return chen < 1e-12 && logexp < 1e-12;
  });

  criterion(3, "independence null vs alternative", 60.0, [](std::ostream& d) {
    const double indep = contrast_ic(linear_path_ensemble(product_atoms()), 5, 5).value;
    const double coupled = contrast_ic(linear_path_ensemble(coupled_atoms()), 5, 5).value;
    const double threshold = 0.15;  // from null runs on separate seeds
    const auto s = unit_amplitude(simulate(ou_fixed_start(512, 500, 2024)));
    const double null_value = contrast_ic(s, 5, 5).value;
    const double mixed = contrast_ic(apply_map(henon_map(1.4, 0.3), s), 5, 5).value;
    d << "exact: independent " << fmt(indep) << ", coupled " << fmt(coupled) << "; OU null " << fmt(null_value)
      << ", after Henon " << fmt(mixed) << ", threshold " << threshold;
    return indep < 1e-12 && coupled >= 1.0 && null_value < threshold && mixed >= 5 * threshold;
  });

  criterion(4, "grid experiment argmin agreement", 600.0, [&](std::ostream& d) {
    const fs::path out = work / "henon_ou_t1";
    if (cli("--threads 1 experiment --config " + configs + "/henon_ou.json --out " + out.string()) != 0) {
      d << "pipeline failed";
      return false;
    }
    const auto rows = read_grid(out / "grid.csv");
    const std::size_t n = static_cast<std::size_t>(std::lround(std::sqrt(double(rows.size()))));
    const auto by = [](auto f) { return [f](const GridRow& a, const GridRow& b) { return f(a) < f(b); }; };
    const auto ip = std::min_element(rows.begin(), rows.end(), by([](const GridRow& r) { return r.phi; })) - rows.begin();
    const auto id = std::min_element(rows.begin(), rows.end(), by([](const GridRow& r) { return r.delta; })) - rows.begin();
    const long di = std::labs(long(ip / n) - long(id / n)), dj = std::labs(long(ip % n) - long(id % n));
    d << n << "x" << n << " grid, Phi argmin (" << rows[ip].t1 << ", " << rows[ip].t2 << ") with delta "
      << fmt(rows[ip].delta) << ", delta argmin (" << rows[id].t1 << ", " << rows[id].t2 << "), offset " << di << "/"
      << dj;
    return n == 21 && rows.size() == 441 && rows[ip].delta < 0.2 && di <= 1 && dj <= 1;
  });

  criterion(5, "discordance fixtures", 60.0, [](std::ostream& d) {
    const double perm = monomial_discordance(ConcordanceMatrix::from_rows({{0, 1, 0}, {0, 0, 1}, {1, 0, 0}})).value;
    const double ones = monomial_discordance(ConcordanceMatrix{3, ConcordanceMode::ensemble, std::vector<double>(9, 1.0)}).value;
    const double reference = monomial_discordance(ConcordanceMatrix::from_rows({{0.079, 0.930}, {0.853, 0.065}})).value;
    SourceSpec spec;
    spec.coords.assign(3, CoordinateParams{});
    for (std::size_t c = 0; c < 3; ++c) spec.coords[c].theta = 1.0 + static_cast<double>(c);
    spec.steps = 999;
    spec.n_paths = 256;
    spec.seed = 505;
    const auto s = simulate(spec);
    PathEnsemble est = s;
    for (std::size_t p = 0; p < s.num_paths(); ++p)
      for (std::size_t k = 0; k < s.num_times(); ++k) {
        est.at(p, k, 0) = std::exp(s.at(p, k, 1));
        est.at(p, k, 1) = std::atan(s.at(p, k, 2));
        est.at(p, k, 2) = -s.at(p, k, 0) * s.at(p, k, 0) * s.at(p, k, 0);
      }
    const double mono = monomial_discordance(concordance_matrix(est, s)).value;
    d << "permutation " << perm << ", all-ones " << ones << ", reference " << fmt(reference) << ", monotone permutation "
      << fmt(mono);
    return perm == 0.0 && ones == 1.0 && std::abs(reference - 0.136) <= 0.001 && mono < 0.05;
  });

  criterion(6, "closed-form xi and Xi", 30.0, [](std::ostream& d) {
    const double rho = 0.6;
    const auto xs = linspace(-2.0, 2.0, 81);
    const auto g = BivariateDensityGrid::sample(xs, xs, [&](double x, double y) {
      return std::exp(-(x * x - 2 * rho * x * y + y * y) / (2 * (1 - rho * rho)));
    });
    const double target = rho / (1 - rho * rho);
    double gauss = 0.0;
    for (double v : mixed_log_derivative(g).values) gauss = std::max(gauss, std::abs(v - target) / target);

    SourceSpec f;
    f.kind = SourceKind::fbm;
    f.coords.assign(2, CoordinateParams{});
    f.coords[0].hurst = 0.25;
    f.coords[1].hurst = 0.8;
    const TimePair p0{0.2, 0.4}, p1{0.4, 0.8};
    const auto xf = xi_ratios(f, p0, p1, p0);
    double fbm = 0.0;
    for (std::size_t i = 0; i < 2; ++i) fbm = std::max(fbm, std::abs(xf[i] - std::pow(0.2 / 0.4, 2 * f.coords[i].hurst)));

    SourceSpec o;
    o.coords.assign(2, CoordinateParams{});
    o.coords[0].theta = 1.0;
    o.coords[1].theta = 3.0;
    const TimePair q0{0.1, 0.2}, q1{0.2, 0.4};
    const auto xo = xi_ratios(o, q0, q1, q0);
    double ou = 0.0;
    for (std::size_t i = 0; i < 2; ++i) {
      const double th = o.coords[i].theta;
      ou = std::max(ou, std::abs(xo[i] - std::sinh(th * 0.1) / std::sinh(th * 0.2)));
    }
    d << "Gaussian rel err " << fmt(gauss) << ", fBM " << fmt(fbm) << ", OU " << fmt(ou);
    return gauss < 1e-4 && fbm < 1e-10 && ou < 1e-10;
  });

  criterion(7, "copula samplers", 120.0, [](std::ostream& d) {
    const double oracle = kendall_tau_by_integration(CopulaFamily::clayton, 2.0, 1000);
    SourceSpec s;
    s.kind = SourceKind::copula_markov;
    s.coords.assign(1, CoordinateParams{.family = CopulaFamily::clayton, .copula_theta = 2.0});
    s.steps = 5000;
    s.n_paths = 1;
    s.seed = 707;
    const auto chain = simulate(s);
    std::vector<double> a(5000), b(5000);
    for (std::size_t k = 0; k < 5000; ++k) {
      a[k] = chain.at(0, k, 0);
      b[k] = chain.at(0, k + 1, 0);
    }
    const double tau = kendall_tau(a, b);
    // Marginal law across 5000 independent chains, where the KS critical value applies.
    s.steps = 20;
    s.n_paths = 5000;
    s.seed = 708;
    const auto cross = simulate(s);
    double ks = 0.0;
    for (std::size_t k : {1u, 20u}) {
      std::vector<double> x;
      for (std::size_t p = 0; p < cross.num_paths(); ++p) x.push_back(cross.at(p, k, 0));
      ks = std::max(ks, ks_normal(x));
    }
    const double crit = 1.628 / std::sqrt(5000.0);
    d << "tau " << fmt(tau) << " vs integrated " << fmt(oracle) << ", KS " << fmt(ks) << " (1% critical " << fmt(crit)
      << ")";
    return std::abs(tau - oracle) < 0.05 && ks < crit;
  });

  criterion(8, "classical reduction", 30.0, [](std::ostream& d) {
    const double sig_indep = contrast_ic(linear_path_ensemble(product_atoms()), 4, 4).value;
    const double cls_indep = classical_contrast(product_atoms(), 4);
    const double sig_coupled = contrast_ic(linear_path_ensemble(coupled_atoms()), 4, 4).value;
    const double cls_coupled = classical_contrast(coupled_atoms(), 4);
    d << "independent " << fmt(sig_indep) << " / " << fmt(cls_indep) << ", coupled " << fmt(sig_coupled) << " / "
      << fmt(cls_coupled);
    return sig_indep < 1e-12 && cls_indep < 1e-12 && sig_coupled >= 0.5 && cls_coupled >= 0.5;
  });

  criterion(9, "MLP separation smoke test", 1200.0, [&](std::ostream& d) {
    const fs::path out = work / "mlp_ou_t1";
    if (cli("--threads 1 experiment --config " + configs + "/mlp_ou.json --out " + out.string()) != 0) {
      d << "pipeline failed";
      return false;
    }
    const auto m = nlohmann::json::parse(slurp(out / "metrics.json"));
    const auto c = concordance_matrix_from_json(m);
    bool dominant = true;
    for (std::size_t i = 0; i < c.d; ++i) {
      std::vector<double> row;
      for (std::size_t j = 0; j < c.d; ++j) row.push_back(c(i, j));
      std::sort(row.rbegin(), row.rend());
      dominant = dominant && row[0] > 2.0 * row[1];
    }
    const double disc = m.at("discordance").get<double>();
    d << "C = [[" << fmt(c(0, 0)) << ", " << fmt(c(0, 1)) << "], [" << fmt(c(1, 0)) << ", " << fmt(c(1, 1))
      << "]], discordance " << fmt(disc) << (dominant ? "" : ", no dominant permutation");
    return dominant && disc < 0.3;
  });

  criterion(10, "determinism across --threads", 1800.0, [&](std::ostream& d) {
    bool ok = true;
    const auto sim = [&](const std::string& threads, const std::string& name) {
      return cli("--threads " + threads + " simulate --model ou --d 2 --steps 500 --paths 128 --seed 42 --out " +
                 (work / name).string());
    };
    ok = sim("1", "sim_t1.csv") == 0 && sim("4", "sim_t4.csv") == 0 &&
         slurp(work / "sim_t1.csv") == slurp(work / "sim_t4.csv");
    if (!ok) d << "simulate differs; ";
    for (const std::string name : {"henon_ou", "mlp_ou"}) {
      const fs::path t1 = work / (name + "_t1"), t4 = work / (name + "_t4");
      if (!fs::exists(t1 / "manifest.json") &&
          cli("--threads 1 experiment --config " + configs + "/" + name + ".json --out " + t1.string()) != 0) {
        d << name << " failed; ";
        ok = false;
        continue;
      }
      if (cli("--threads 4 experiment --config " + configs + "/" + name + ".json --out " + t4.string()) != 0) {
        d << name << " failed; ";
        ok = false;
        continue;
      }
      ok = same_bundle(t1, t4, d) && ok;
    }
    d << "simulate, grid and sgd pipelines compared at 1 and 4 threads";
    return ok;
  });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
