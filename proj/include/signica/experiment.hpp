#pragma once

// Config-driven pipeline: simulate -> mix -> separate -> evaluate, with all
// randomness drawn from named sub-streams of one master seed.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "metrics.hpp"
#include "mixing_maps.hpp"
#include "optimizer.hpp"
#include "paths.hpp"
#include "rng.hpp"
#include "signature.hpp"
#include "source_models.hpp"

namespace signica {

inline constexpr const char* kVersion = "0.1.0";

enum class Method { none, grid, nelder_mead, sgd_fd };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::none: return "none";
    case Method::grid: return "grid";
    case Method::nelder_mead: return "nelder_mead";
    case Method::sgd_fd: return "sgd_fd";
  }
  return "?";
}

inline Method method_from_string(const std::string& s) {
  for (auto m : {Method::none, Method::grid, Method::nelder_mead, Method::sgd_fd})
    if (to_string(m) == s) return m;
  throw ValidationError("optimizer.method", "unknown method '" + s + "'");
}

/// How the starting parameters of an iterative optimizer are chosen.
///   "theta0": explicit vector; "init": "glorot" (MLP families) draws from the
///   optimizer stream; "jitter" adds N(0, jitter^2) noise from the same stream.
struct InitSpec {
  std::optional<std::vector<double>> theta0;
  std::string init = "theta0";
  double jitter = 0.0;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  SourceSpec source;
  nlohmann::json mixing;     // {"family", "params", ...}
  nlohmann::json candidate;  // {"family", ...shape fields}
  Method method = Method::grid;
  ThetaGrid grid;
  InitSpec init;
  NelderMeadOptions nelder_mead;
  SgdOptions sgd;
  std::size_t depth = 6;
  std::size_t mu = 6;
  double penalty = 1e6;
  std::optional<ConcordanceMode> mode;
  bool write_ensembles = false;
  std::string output_dir = "out";
  nlohmann::json raw;  // the config as given, for hashing
};

namespace detail {

inline ThetaGrid grid_from_json(const nlohmann::json& j) {
  ThetaGrid g;
  if (j.contains("axes")) {
    g.axes = j.at("axes").get<std::vector<std::vector<double>>>();
  } else {
    if (!j.contains("lo") || !j.contains("hi")) throw ValidationError("optimizer.grid", "need axes or lo/hi/n");
    const auto lo = j.at("lo").get<std::vector<double>>();
    const auto hi = j.at("hi").get<std::vector<double>>();
    if (lo.size() != hi.size()) throw ValidationError("optimizer.grid", "lo and hi differ in length");
    std::vector<std::size_t> n;
    if (j.contains("n") && j.at("n").is_array()) n = j.at("n").get<std::vector<std::size_t>>();
    else n.assign(lo.size(), j.value("n", std::size_t{21}));
    if (n.size() != lo.size()) throw ValidationError("optimizer.grid", "n does not match lo/hi");
    for (std::size_t k = 0; k < lo.size(); ++k) {
      if (n[k] == 0) throw ValidationError("optimizer.grid", "n must be positive");
      if (!(hi[k] >= lo[k])) throw ValidationError("optimizer.grid", "hi must not be below lo");
      std::vector<double> axis(n[k]);
      for (std::size_t i = 0; i < n[k]; ++i)
        axis[i] = n[k] == 1 ? lo[k]
                            : lo[k] + (hi[k] - lo[k]) * static_cast<double>(i) / static_cast<double>(n[k] - 1);
      g.axes.push_back(std::move(axis));
    }
  }
  for (const auto& a : g.axes)
    if (a.empty()) throw ValidationError("optimizer.grid", "empty axis");
  return g;
}

inline nlohmann::json without_output_dir(nlohmann::json j) {
  if (j.is_object()) j.erase("output_dir");
  return j;
}

inline std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace detail

/// FNV-1a of the canonical (key-sorted, compact) config without its output directory.
inline std::string config_hash(const nlohmann::json& raw) {
  return detail::hex64(fnv1a(detail::without_output_dir(raw).dump()));
}

/// Parses and validates a config. Missing seed, unknown families and mu > depth
/// raise ValidationError naming the field.
inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("config", "expected a JSON object");
  ExperimentConfig c;
  c.raw = j;
  if (!j.contains("seed")) throw ValidationError("seed", "missing");
  c.seed = j.at("seed").get<std::uint64_t>();
  if (!j.contains("source")) throw ValidationError("source", "missing");
  c.source = source_spec_from_json(j.at("source"));
  c.depth = j.value("depth", c.depth);
  c.mu = j.value("mu", c.mu);
  if (c.mu > c.depth) throw ValidationError("mu", "mu exceeds depth");
  if (c.mu < 2) throw ValidationError("mu", "must be at least 2");
  c.penalty = j.value("penalty", c.penalty);

  if (!j.contains("mixing")) throw ValidationError("mixing", "missing");
  c.mixing = j.at("mixing");
  const ParamMap mix = param_map_from_json(c.mixing);
  if (mix.dim() != c.source.dim()) throw ValidationError("mixing", "map dimension does not match the source");

  const nlohmann::json opt = j.value("optimizer", nlohmann::json::object());
  c.method = method_from_string(opt.value("method", std::string("grid")));
  c.candidate = j.value("candidate", nlohmann::json::object());
  if (c.method != Method::none) {
    if (!c.candidate.contains("family")) throw ValidationError("candidate.family", "missing");
    const auto fam = candidate_family(c.candidate.at("family").get<std::string>(), c.source.dim(), c.candidate);
    if (c.method == Method::grid) {
      c.grid = detail::grid_from_json(opt.value("grid", nlohmann::json::object()));
      if (c.grid.axes.size() != fam.num_params)
        throw ValidationError("optimizer.grid", "grid dimension does not match the candidate family");
    } else {
      if (opt.contains("theta0")) c.init.theta0 = opt.at("theta0").get<std::vector<double>>();
      c.init.init = opt.value("init", std::string(c.init.theta0 ? "theta0" : "glorot"));
      c.init.jitter = opt.value("jitter", 0.0);
      if (c.init.init == "theta0") {
        if (!c.init.theta0) throw ValidationError("optimizer.theta0", "missing");
        if (c.init.theta0->size() != fam.num_params)
          throw ValidationError("optimizer.theta0", "expected " + std::to_string(fam.num_params) + " parameters");
      } else if (c.init.init == "glorot") {
        if (fam.name != "mlp") throw ValidationError("optimizer.init", "glorot initialization needs an mlp family");
      } else {
        throw ValidationError("optimizer.init", "unknown init '" + c.init.init + "'");
      }
      if (!(c.init.jitter >= 0.0)) throw ValidationError("optimizer.jitter", "must be non-negative");
      const auto o = opt.value("options", nlohmann::json::object());
      if (c.method == Method::nelder_mead) c.nelder_mead = nelder_mead_options_from_json(o);
      else c.sgd = sgd_options_from_json(o);
    }
  }
  const nlohmann::json ev = j.value("evaluation", nlohmann::json::object());
  if (ev.contains("mode")) c.mode = concordance_mode_from_string(ev.at("mode").get<std::string>());
  c.write_ensembles = j.value("write_ensembles", false);
  c.output_dir = j.value("output_dir", c.output_dir);
  return c;
}

inline ExperimentConfig load_experiment_config(const std::string& file) {
  std::ifstream is(file);
  if (!is) throw ValidationError("config", "cannot open '" + file + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("config", e.what());
  }
  return experiment_config_from_json(j);
}

struct ExperimentResult {
  PathEnsemble sources;
  PathEnsemble mixture;
  PathEnsemble estimate;
  OptimizerReport report;
  std::optional<GridResult> phi;
  std::vector<double> delta;  // discordance per grid point (grid method only)
  ConcordanceMatrix concordance;
  Discordance discordance;
  ContrastResult mixture_contrast;
  ContrastResult estimate_contrast;
  std::map<std::string, double> stage_timings_ms;
  std::vector<std::string> artifacts;
  nlohmann::json manifest;
};

namespace detail {

/// Runs one stage, recording its wall time and prefixing errors with the stage name.
template <typename F>
auto run_stage(const std::string& stage, std::map<std::string, double>& timings, F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  auto done = [&] {
    timings[stage] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  };
  const std::string tag = "[" + stage + "] ";
  try {
    if constexpr (std::is_void_v<decltype(f())>) {
      f();
      done();
    } else {
      auto r = f();
      done();
      return r;
    }
  } catch (const ValidationError& e) {
    throw ValidationError(e.field(), tag + e.what());
  } catch (const DomainError& e) {
    throw DomainError(tag + e.what());
  } catch (const DimensionMismatch& e) {
    throw DimensionMismatch(tag + e.what());
  } catch (const DegenerateNormalization& e) {
    throw DegenerateNormalization(tag + e.what());
  } catch (const Unsupported& e) {
    throw Unsupported(tag + e.what());
  } catch (const NotPositiveDefinite& e) {
    throw NotPositiveDefinite(tag + e.what());
  } catch (const Error& e) {
    throw Error(tag + e.what());
  }
}

inline void write_text(const std::filesystem::path& file, const std::string& text) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw ValidationError("output_dir", "cannot write '" + file.string() + "'");
  os << text;
}

inline std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

inline std::vector<double> initial_theta(const ExperimentConfig& c, const CandidateFamily& fam) {
  const std::uint64_t stream = substream(c.seed, "optimizer");
  std::vector<double> theta;
  if (c.init.init == "glorot") theta = mlp_initial_params(c.candidate.contains("layers") ? mlp_shape_from_json(c.candidate)
                                                                : default_mlp_shape(fam.dim),
                               derive_seed(stream, {0}));
  else theta = *c.init.theta0;
  if (c.init.jitter > 0.0) {
    Engine rng(derive_seed(stream, {1}));
    std::normal_distribution<double> z(0.0, c.init.jitter);
    for (double& t : theta) t += z(rng);
  }
  return theta;
}

}  // namespace detail

/// Simulated sources: the configured process under the "simulate" sub-stream,
/// centered and scaled to unit amplitude.
inline PathEnsemble experiment_sources(const ExperimentConfig& c) {
  SourceSpec spec = c.source;
  spec.seed = substream(c.seed, "simulate");
  PathEnsemble s = unit_amplitude(simulate(spec));
  s.label = "sources";
  return s;
}

/// Runs the pipeline and writes its artifacts into `out_dir` (created if needed).
inline ExperimentResult run_experiment(const ExperimentConfig& c, const std::filesystem::path& out_dir) {
  ExperimentResult r;
  auto& tm = r.stage_timings_ms;
  std::filesystem::create_directories(out_dir);

  r.sources = detail::run_stage("simulate", tm, [&] { return experiment_sources(c); });
  r.mixture = detail::run_stage("mix", tm, [&] {
    PathEnsemble x = apply_map(param_map_from_json(c.mixing), r.sources);
    x.label = "mixture";
    return x;
  });

  const ContrastOptions copt{c.depth, c.mu, true, 1e-12};
  std::optional<CandidateFamily> fam;
  if (c.method != Method::none)
    fam = candidate_family(c.candidate.at("family").get<std::string>(), c.source.dim(), c.candidate);

  detail::run_stage("separate", tm, [&] {
    r.mixture_contrast = contrast_ic(r.mixture, copt);
    if (c.method == Method::none) {
      r.report.method = "none";
      r.report.stop_reason = "no optimization";
      r.estimate = r.mixture;
      return;
    }
    const Objective obj{r.mixture, *fam, copt, c.penalty};
    std::vector<double> theta_hat;
    switch (c.method) {
      case Method::grid: {
        auto [rep, res] = grid_search(obj, c.grid);
        r.report = std::move(rep);
        r.phi = std::move(res);
        break;
      }
      case Method::nelder_mead:
        r.report = nelder_mead(obj, detail::initial_theta(c, *fam), c.nelder_mead);
        break;
      case Method::sgd_fd:
        r.report = sgd_fd(obj, detail::initial_theta(c, *fam), c.sgd, substream(c.seed, "subsampling"));
        break;
      case Method::none:
        break;
    }
    // SGD ends on its last iterate; the others on their best point.
    theta_hat = c.method == Method::sgd_fd ? r.report.final_theta : r.report.best_theta;
    r.estimate = apply_map(fam->make(theta_hat), r.mixture);
    r.estimate.label = "estimate";
    r.estimate_contrast = contrast_ic(r.estimate, copt);
  });

  detail::run_stage("evaluate", tm, [&] {
    r.concordance = concordance_matrix(r.estimate, r.sources, c.mode);
    r.discordance = monomial_discordance(r.concordance);
    if (r.phi) {
      const GridResult& g = *r.phi;
      r.delta.assign(g.values.size(), 1.0);
      // Points outside the candidate domain keep the worst possible discordance.
      parallel_for(g.values.size(), [&](std::size_t i) {
        if (g.penalized[i]) return;
        try {
          const auto est = apply_map(fam->make(g.grid.point(i)), r.mixture);
          r.delta[i] = monomial_discordance(concordance_matrix(est, r.sources, c.mode)).value;
        } catch (const DomainError&) {
        } catch (const ValidationError&) {
        }
      });
    }
  });

  detail::run_stage("write", tm, [&] {
    auto emit = [&](const std::string& name, const std::string& text) {
      detail::write_text(out_dir / name, text);
      r.artifacts.push_back(name);
    };
    if (c.write_ensembles) {
      for (const auto* e : {&r.sources, &r.mixture, &r.estimate}) {
        std::ostringstream os;
        write_csv(os, *e);
        emit(e->label + ".csv", os.str());
      }
    }
    emit("contrast.json", detail::dump({{"mixture", to_json(r.mixture_contrast)},
                                        {"estimate", c.method == Method::none ? nlohmann::json(nullptr)
                                                                              : to_json(r.estimate_contrast)}}));
    emit("optimizer_report.json", detail::dump(to_json(r.report)));
    if (r.phi) {
      const auto& g = r.phi->grid;
      std::ostringstream phi, delta, both;
      write_grid_csv(phi, g, {"contrast"}, {&r.phi->values});
      write_grid_csv(delta, g, {"discordance"}, {&r.delta});
      write_grid_csv(both, g, {"contrast", "discordance"}, {&r.phi->values, &r.delta});
      emit("phi_grid.csv", phi.str());
      emit("delta_grid.csv", delta.str());
      emit("grid.csv", both.str());
    }
    {
      std::ostringstream os;
      write_matrix_csv(os, r.concordance);
      emit("concordance.csv", os.str());
    }
    emit("metrics.json", detail::dump(metrics_json(r.concordance, r.discordance)));
  });

  r.artifacts.push_back("manifest.json");
  r.manifest = {{"config_hash", config_hash(c.raw)},
                {"seed", c.seed},
                {"streams",
                 {{"simulate", substream(c.seed, "simulate")},
                  {"optimizer", substream(c.seed, "optimizer")},
                  {"subsampling", substream(c.seed, "subsampling")}}},
                {"version", kVersion},
                {"stage_timings_ms", tm},
                {"artifact_paths", r.artifacts}};
  detail::write_text(out_dir / "manifest.json", detail::dump(r.manifest));
  return r;
}

}  // namespace signica
