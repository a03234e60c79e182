#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "signica/experiment.hpp"

using namespace signica;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string output;  // stdout and stderr
};

Run cli(const std::string& args) {
  Run r;
  const std::string cmd = std::string(SIGNICA_CLI) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 512> buf{};
  while (fgets(buf.data(), static_cast<int>(buf.size()), pipe)) r.output += buf.data();
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("signica_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

// A small pipeline that finishes in well under a second.
nlohmann::json small_config() {
  return {{"seed", 11},
          {"source", {{"kind", "ou"}, {"d", 2}, {"theta", {1, 4}}, {"start", 0}, {"paths", 64}, {"steps", 40}}},
          {"mixing", {{"family", "henon_shear"}, {"params", {0.5, -0.5}}}},
          {"candidate", {{"family", "henon_shear_inverse"}}},
          {"optimizer", {{"method", "grid"}, {"grid", {{"lo", {0, -1}}, {"hi", {1, 0}}, {"n", 3}}}}},
          {"depth", 4},
          {"mu", 4},
          {"write_ensembles", true}};
}

}  // namespace

TEST(Cli, SimulateIsByteIdentical) {
  const auto dir = scratch("sim");
  const std::string base = "simulate --model ou --d 2 --steps 500 --paths 128 --seed 42 --out ";
  ASSERT_EQ(cli(base + (dir / "a.csv").string()).code, 0);
  ASSERT_EQ(cli("--threads 3 " + base + (dir / "b.csv").string()).code, 0);
  const auto a = slurp(dir / "a.csv");
  EXPECT_EQ(a, slurp(dir / "b.csv"));
  const auto e = read_csv((dir / "a.csv").string());
  EXPECT_EQ(e.num_paths(), 128u);
  EXPECT_EQ(e.num_times(), 501u);
}

TEST(Cli, ContrastRejectsMuAboveDepth) {
  const auto dir = scratch("mu");
  ASSERT_EQ(cli("simulate --d 2 --steps 10 --paths 8 --seed 1 --out " + (dir / "s.csv").string()).code, 0);
  const auto r = cli("contrast --in " + (dir / "s.csv").string() + " --depth 4 --mu 5");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("mu exceeds depth"), std::string::npos) << r.output;
}

TEST(Cli, ValidationErrorsNameTheField) {
  const auto dir = scratch("bad");
  auto r = cli("simulate --d 2 --seed 1 --theta 1,2,3");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("theta"), std::string::npos);
  r = cli("simulate --model brownian --seed 1");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("kind"), std::string::npos) << r.output;
  write(dir / "bad.csv", "path_id,t,x1,x2\n0,0,1\n");
  r = cli("contrast --in " + (dir / "bad.csv").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("row"), std::string::npos) << r.output;
  r = cli("mix --in " + (dir / "bad.csv").string() + " --family spline");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("family"), std::string::npos) << r.output;
  EXPECT_EQ(cli("simulate").code, 2);  // --seed is required
}

TEST(Cli, EvaluateIdenticalFilesGivesZero) {
  // Cross-coordinate Kendall tau is exactly zero at every time (3 concordant, 3 discordant pairs),
  // so identical inputs sit exactly on a permutation matrix.
  const auto dir = scratch("eval");
  write(dir / "s.csv",
        "path_id,t,x1,x2\n"
        "0,0,1,2\n0,1,1,2\n"
        "1,0,2,4\n1,1,2,4\n"
        "2,0,3,1\n2,1,3,1\n"
        "3,0,4,3\n3,1,4,3\n");
  const auto r = cli("evaluate --est " + (dir / "s.csv").string() + " --true " + (dir / "s.csv").string() +
                     " --out " + (dir / "m.json").string());
  ASSERT_EQ(r.code, 0) << r.output;
  const auto j = nlohmann::json::parse(slurp(dir / "m.json"));
  EXPECT_EQ(j.at("discordance").get<double>(), 0.0);
  EXPECT_EQ(j.at("permutation"), nlohmann::json::array({0, 1}));
}

TEST(Cli, MixThenSeparateRecoversGridPoint) {
  const auto dir = scratch("sep");
  const auto s = (dir / "s.csv").string(), x = (dir / "x.csv").string();
  ASSERT_EQ(cli("simulate --d 2 --theta 1,4 --start 0 --steps 40 --paths 64 --seed 5 --out " + s).code, 0);
  ASSERT_EQ(cli("mix --in " + s + " --family henon_shear --params [0.5,-0.5] --out " + x).code, 0);
  const auto r = cli("separate --in " + x + " --family henon_shear_inverse --lo [0,-1] --hi [1,0] --n 3 --depth 4 --mu 4 --out " +
                     (dir / "out").string());
  ASSERT_EQ(r.code, 0) << r.output;
  const auto rep = optimizer_report_from_json(nlohmann::json::parse(slurp(dir / "out" / "optimizer_report.json")));
  EXPECT_EQ(rep.best_theta, (std::vector<double>{0.5, -0.5}));
  EXPECT_EQ(read_csv((dir / "out" / "estimate.csv").string()).num_paths(), 64u);
  EXPECT_TRUE(fs::exists(dir / "out" / "phi_grid.csv"));
}

TEST(Config, MuAboveDepthAndMissingSeed) {
  auto j = small_config();
  j["mu"] = 6;
  try {
    experiment_config_from_json(j);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "mu");
    EXPECT_NE(std::string(e.what()).find("mu exceeds depth"), std::string::npos);
  }
  j = small_config();
  j.erase("seed");
  EXPECT_THROW(experiment_config_from_json(j), ValidationError);
  j = small_config();
  j["candidate"]["family"] = "spline";
  EXPECT_THROW(experiment_config_from_json(j), ValidationError);
  j = small_config();
  j["optimizer"]["grid"]["lo"] = {0};
  EXPECT_THROW(experiment_config_from_json(j), ValidationError);
}

TEST(Config, HashIgnoresOutputDirOnly) {
  auto a = small_config(), b = small_config();
  a["output_dir"] = "x";
  b["output_dir"] = "y";
  EXPECT_EQ(config_hash(a), config_hash(b));
  b["seed"] = 12;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Experiment, CliExitCodeForMuAboveDepth) {
  const auto dir = scratch("cfg");
  auto j = small_config();
  j["mu"] = 5;
  write(dir / "c.json", j.dump());
  const auto r = cli("experiment --config " + (dir / "c.json").string() + " --out " + (dir / "out").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("mu exceeds depth"), std::string::npos) << r.output;
  write(dir / "broken.json", "{\"seed\": ");
  EXPECT_EQ(cli("experiment --config " + (dir / "broken.json").string()).code, 2);
}

TEST(Experiment, RerunIsIdenticalAndRoundTrips) {
  const auto dir = scratch("rerun");
  write(dir / "c.json", small_config().dump());
  const std::string cfg = "experiment --config " + (dir / "c.json").string();
  ASSERT_EQ(cli(cfg + " --out " + (dir / "a").string()).code, 0);
  ASSERT_EQ(cli("--threads 1 " + cfg + " --out " + (dir / "b").string()).code, 0);

  auto manifest = [&](const char* sub) {
    auto m = nlohmann::json::parse(slurp(dir / sub / "manifest.json"));
    m.erase("stage_timings_ms");
    return m;
  };
  const auto ma = manifest("a");
  EXPECT_EQ(ma, manifest("b"));
  EXPECT_EQ(ma.at("config_hash"), config_hash(small_config()));
  for (const auto& name : ma.at("artifact_paths")) {
    if (name == "manifest.json") continue;
    EXPECT_EQ(slurp(dir / "a" / name.get<std::string>()), slurp(dir / "b" / name.get<std::string>())) << name;
  }

  // Every artifact reads back through its loader.
  const auto src = read_csv((dir / "a" / "sources.csv").string());
  const auto est = read_csv((dir / "a" / "estimate.csv").string());
  EXPECT_EQ(src.num_paths(), 64u);
  EXPECT_EQ(est.dim, 2u);
  const auto metrics = nlohmann::json::parse(slurp(dir / "a" / "metrics.json"));
  const auto c = concordance_matrix_from_json(metrics);
  EXPECT_EQ(monomial_discordance(c).value, metrics.at("discordance").get<double>());
  const auto rep = optimizer_report_from_json(nlohmann::json::parse(slurp(dir / "a" / "optimizer_report.json")));
  EXPECT_EQ(rep.evaluations, 9u);
  const auto contrast = nlohmann::json::parse(slurp(dir / "a" / "contrast.json"));
  EXPECT_DOUBLE_EQ(contrast.at("estimate").at("contrast").get<double>(), rep.best_value);
  EXPECT_EQ(slurp(dir / "a" / "grid.csv").substr(0, 36), "theta1,theta2,contrast,discordance\n0");
}

TEST(Experiment, StageErrorsAreTagged) {
  std::map<std::string, double> tm;
  try {
    detail::run_stage("mix", tm, [] { throw DomainError("path 3, time index 7: pole"); });
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_EQ(std::string(e.what()), "[mix] path 3, time index 7: pole");
  }
  try {
    detail::run_stage("separate", tm, []() -> int { throw ValidationError("theta0", "missing"); });
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "theta0");
    EXPECT_EQ(std::string(e.what()).rfind("theta0: [separate] ", 0), 0u) << e.what();
  }
  EXPECT_EQ(detail::run_stage("write", tm, [] { return 4; }), 4);
  EXPECT_TRUE(tm.count("write"));
  auto j = small_config();
  j["source"]["d"] = 3;
  j["source"]["theta"] = 1;
  EXPECT_THROW(experiment_config_from_json(j), ValidationError);  // planar mixing on 3-d sources
}

TEST(Experiment, NoOptimizerUsesMixtureAsEstimate) {
  auto j = small_config();
  j["mixing"] = {{"family", "identity"}, {"d", 2}};
  j["optimizer"] = {{"method", "none"}};
  const fs::path dir = scratch("none");
  const auto r = run_experiment(experiment_config_from_json(j), dir);
  // A shared fixed start makes t = 0 uninformative; it is skipped, so the diagonal is exactly one.
  EXPECT_EQ(r.concordance(0, 0), 1.0);
  EXPECT_EQ(r.concordance(1, 1), 1.0);
  EXPECT_FALSE(fs::exists(dir / "grid.csv"));
}
