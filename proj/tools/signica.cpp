// signica: simulate, mix, score and separate path ensembles from the shell.
//
// Exit codes: 0 ok, 2 invalid input (the message names the field), 1 anything else.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "signica/experiment.hpp"

namespace fs = std::filesystem;
using namespace signica;

namespace {

void write_file(const fs::path& file, const std::string& text) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream os(file, std::ios::binary);
  if (!os) throw ValidationError("out", "cannot write '" + file.string() + "'");
  os << text;
}

std::string pretty(const nlohmann::json& j) { return j.dump(2) + "\n"; }

std::string csv_text(const PathEnsemble& e) {
  std::ostringstream os;
  write_csv(os, e);
  return os.str();
}

PathEnsemble load_csv(const std::string& file, const std::string& field) {
  std::ifstream is(file);
  if (!is) throw ValidationError(field, "cannot open '" + file + "'");
  try {
    return read_csv(is);
  } catch (const ValidationError& e) {
    throw ValidationError(field, e.what());
  }
}

nlohmann::json parse_json_arg(const std::string& text, const std::string& field) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(field, e.what());
  }
}

void check_depth(std::size_t depth, std::size_t mu) {
  if (mu > depth) throw ValidationError("mu", "mu exceeds depth");
  if (mu < 2) throw ValidationError("mu", "must be at least 2");
}

// Per-coordinate source parameters given as comma lists or a single broadcast value.
struct SimulateArgs {
  std::string model = "ou";
  std::size_t d = 2, steps = 500, paths = 128;
  std::uint64_t seed = 0;
  double horizon = 1.0;
  std::map<std::string, std::vector<double>> coords;
  std::string family;
  std::string out;
};

struct ContrastArgs {
  std::string in, out;
  std::size_t depth = 5, mu = 5;
};

struct MixArgs {
  std::string in, family, params = "[]", out;
};

struct SeparateArgs {
  std::string in, family, method = "grid", out = "separate_out";
  std::string lo, hi, theta0, layers;
  std::size_t n = 21, depth = 6, mu = 6, iters = 200, batch = 64, max_evals = 500;
  double lr = 0.01, l2 = 1e-4;
  std::uint64_t seed = 0;
};

struct EvaluateArgs {
  std::string est, truth, mode, out;
};

int run_simulate(const SimulateArgs& a) {
  nlohmann::json j = {{"kind", a.model}, {"d", a.d},         {"steps", a.steps},
                      {"paths", a.paths}, {"horizon", a.horizon}, {"seed", a.seed}};
  for (const auto& [key, vals] : a.coords) {
    if (vals.empty()) continue;
    if (vals.size() == 1) j[key] = vals[0];
    else j[key] = vals;
  }
  if (!a.family.empty()) j["family"] = a.family;
  const auto e = simulate(source_spec_from_json(j));
  if (a.out.empty()) std::cout << csv_text(e);
  else write_file(a.out, csv_text(e));
  return 0;
}

int run_mix(const MixArgs& a) {
  nlohmann::json j = {{"family", a.family}, {"params", parse_json_arg(a.params, "params")}};
  const auto m = param_map_from_json(j);
  const auto out = apply_map(m, load_csv(a.in, "in"));
  if (a.out.empty()) std::cout << csv_text(out);
  else write_file(a.out, csv_text(out));
  return 0;
}

int run_contrast(const ContrastArgs& a) {
  check_depth(a.depth, a.mu);
  const auto r = contrast_ic(load_csv(a.in, "in"), ContrastOptions{a.depth, a.mu, true, 1e-12});
  if (a.out.empty()) std::cout << pretty(to_json(r));
  else write_file(a.out, pretty(to_json(r)));
  return 0;
}

std::vector<double> number_list(const std::string& text, const std::string& field) {
  const auto j = parse_json_arg(text, field);
  if (!j.is_array()) throw ValidationError(field, "expected a JSON array");
  return j.get<std::vector<double>>();
}

int run_separate(const SeparateArgs& a) {
  check_depth(a.depth, a.mu);
  const PathEnsemble x = load_csv(a.in, "in");
  nlohmann::json cand = {{"family", a.family}};
  if (!a.layers.empty()) cand["layers"] = parse_json_arg(a.layers, "layers");
  const auto fam = candidate_family(a.family, x.dim, cand);
  const Objective obj{x, fam, ContrastOptions{a.depth, a.mu, true, 1e-12}, 1e6};
  const fs::path dir(a.out);
  fs::create_directories(dir);

  OptimizerReport rep;
  std::vector<double> theta_hat;
  const Method method = method_from_string(a.method);
  if (method == Method::grid) {
    if (a.lo.empty() || a.hi.empty()) throw ValidationError("lo", "grid search needs --lo and --hi");
    const auto g = detail::grid_from_json({{"lo", number_list(a.lo, "lo")}, {"hi", number_list(a.hi, "hi")}, {"n", a.n}});
    if (g.axes.size() != fam.num_params) throw ValidationError("lo", "grid dimension does not match the candidate family");
    auto [r, res] = grid_search(obj, g);
    std::ostringstream os;
    write_grid_csv(os, g, {"contrast"}, {&res.values});
    write_file(dir / "phi_grid.csv", os.str());
    rep = std::move(r);
    theta_hat = rep.best_theta;
  } else if (method == Method::none) {
    throw ValidationError("method", "separate needs an optimizer");
  } else {
    std::vector<double> theta0;
    if (!a.theta0.empty()) theta0 = number_list(a.theta0, "theta0");
    else if (fam.name == "mlp")
      theta0 = mlp_initial_params(cand.contains("layers") ? mlp_shape_from_json(cand) : default_mlp_shape(x.dim),
                                  derive_seed(substream(a.seed, "optimizer"), {0}));
    else throw ValidationError("theta0", "missing");
    if (theta0.size() != fam.num_params)
      throw ValidationError("theta0", "expected " + std::to_string(fam.num_params) + " parameters");
    if (method == Method::nelder_mead) {
      NelderMeadOptions o;
      o.max_evals = a.max_evals;
      rep = nelder_mead(obj, theta0, o);
      theta_hat = rep.best_theta;
    } else {
      SgdOptions o;
      o.lr = a.lr;
      o.l2 = a.l2;
      o.iters = a.iters;
      o.batch = a.batch;
      rep = sgd_fd(obj, theta0, o, substream(a.seed, "subsampling"));
      theta_hat = rep.final_theta;
    }
  }
  auto est = apply_map(fam.make(theta_hat), x);
  est.label = "estimate";
  write_file(dir / "optimizer_report.json", pretty(to_json(rep)));
  write_file(dir / "estimate.csv", csv_text(est));
  return 0;
}

int run_evaluate(const EvaluateArgs& a) {
  const auto est = load_csv(a.est, "est"), truth = load_csv(a.truth, "true");
  std::optional<ConcordanceMode> mode;
  if (!a.mode.empty()) mode = concordance_mode_from_string(a.mode);
  const auto c = concordance_matrix(est, truth, mode);
  const auto j = metrics_json(c, monomial_discordance(c));
  if (a.out.empty()) std::cout << pretty(j);
  else write_file(a.out, pretty(j));
  return 0;
}

int run_experiment_cmd(const std::string& config, const std::string& out) {
  const auto c = load_experiment_config(config);
  const fs::path dir = out.empty() ? fs::path(c.output_dir) : fs::path(out);
  const auto r = run_experiment(c, dir);
  std::cout << "discordance " << format_double(r.discordance.value) << "\n";
  std::cout << "wrote " << r.artifacts.size() << " files to " << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Signature-cumulant nonlinear ICA for path ensembles"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  std::size_t threads = 0;
  app.add_option("--threads", threads, "worker cap (0 = hardware); results do not depend on it");

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "simulate an independent-component source ensemble");
  s->add_option("--model", sim.model, "ou, gp_gamma_exp, fbm, gbm, white_noise_drift, copula_markov");
  s->add_option("--d", sim.d);
  s->add_option("--steps", sim.steps);
  s->add_option("--paths", sim.paths);
  s->add_option("--horizon", sim.horizon);
  s->add_option("--seed", sim.seed)->required();
  for (const char* key : {"theta", "sigma", "mu", "alpha", "gamma", "hurst", "s0", "vol_growth", "copula_theta", "start"})
    s->add_option(std::string("--") + key, sim.coords[key], "one value or one per coordinate")->delimiter(',');
  s->add_option("--family", sim.family, "copula family");
  s->add_option("--out", sim.out, "CSV file (default stdout)");

  MixArgs mix;
  auto* m = app.add_subcommand("mix", "apply a mixing map to every path node");
  m->add_option("--in", mix.in)->required();
  m->add_option("--family", mix.family)->required();
  m->add_option("--params", mix.params, "JSON array");
  m->add_option("--out", mix.out);

  ContrastArgs con;
  auto* c = app.add_subcommand("contrast", "signature-cumulant independence contrast of an ensemble");
  c->add_option("--in", con.in)->required();
  c->add_option("--depth", con.depth);
  c->add_option("--mu", con.mu);
  c->add_option("--out", con.out);

  SeparateArgs sep;
  auto* p = app.add_subcommand("separate", "minimize the contrast over a candidate family");
  p->add_option("--in", sep.in)->required();
  p->add_option("--family", sep.family)->required();
  p->add_option("--method", sep.method, "grid, nelder_mead or sgd_fd");
  p->add_option("--lo", sep.lo, "grid lower corner, JSON array");
  p->add_option("--hi", sep.hi, "grid upper corner, JSON array");
  p->add_option("--n", sep.n, "grid points per axis");
  p->add_option("--theta0", sep.theta0, "start, JSON array");
  p->add_option("--layers", sep.layers, "MLP layer widths, JSON array");
  p->add_option("--depth", sep.depth);
  p->add_option("--mu", sep.mu);
  p->add_option("--iters", sep.iters);
  p->add_option("--batch", sep.batch);
  p->add_option("--lr", sep.lr);
  p->add_option("--l2", sep.l2);
  p->add_option("--max-evals", sep.max_evals);
  p->add_option("--seed", sep.seed);
  p->add_option("--out", sep.out, "output directory");

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "concordance matrix and monomial discordance");
  e->add_option("--est", ev.est)->required();
  e->add_option("--true", ev.truth)->required();
  e->add_option("--mode", ev.mode, "ensemble or single_path");
  e->add_option("--out", ev.out);

  std::string config, exp_out;
  auto* x = app.add_subcommand("experiment", "run a config-driven simulate/mix/separate/evaluate pipeline");
  x->add_option("--config", config)->required();
  x->add_option("--out", exp_out, "output directory (overrides the config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  try {
    set_max_threads(threads);
    if (*s) return run_simulate(sim);
    if (*m) return run_mix(mix);
    if (*c) return run_contrast(con);
    if (*p) return run_separate(sep);
    if (*e) return run_evaluate(ev);
    if (*x) return run_experiment_cmd(config, exp_out);
  } catch (const ValidationError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  } catch (const DimensionMismatch& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& err) {
    std::cerr << "error: config: " << err.what() << "\n";
    return 2;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 1;
}
