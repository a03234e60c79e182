#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "signica/optimizer.hpp"
#include "signica/source_models.hpp"

using namespace signica;

namespace {

double quad(std::span<const double> t) { return (t[0] - 1.0) * (t[0] - 1.0) + 10.0 * (t[1] + 2.0) * (t[1] + 2.0); }

// Product of two independent two-point laws, as an exactly weighted ensemble of straight paths.
PathEnsemble product_law() {
  std::vector<WeightedPoint> atoms;
  for (auto [x, px] : {std::pair{0.0, 0.3}, {1.0, 0.7}})
    for (auto [y, py] : {std::pair{0.0, 0.6}, {2.0, 0.4}}) atoms.push_back({{x, y}, px * py});
  return linear_path_ensemble(atoms);
}

PathEnsemble ou_mixture(std::uint64_t seed) {
  SourceSpec s;
  s.coords.assign(2, CoordinateParams{});
  s.coords[1].theta = 3.0;
  s.steps = 40;
  s.n_paths = 32;
  s.seed = seed;
  return unit_amplitude(simulate(s));
}

Objective linear_objective(PathEnsemble data) {
  return Objective{std::move(data), candidate_family("linear", 2), ContrastOptions{4, 4, true, 1e-12}, 1e6};
}

}  // namespace

TEST(NelderMead, QuadraticToy) {
  const auto r = nelder_mead(quad, {0.0, 0.0}, NelderMeadOptions{400, 0.1, 1e-8});
  EXPECT_NEAR(r.best_theta[0], 1.0, 1e-4);
  EXPECT_NEAR(r.best_theta[1], -2.0, 1e-4);
  EXPECT_LT(r.best_value, 1e-7);
  EXPECT_LE(r.evaluations, 400u);
  EXPECT_EQ(r.method, "nelder_mead");
}

TEST(NelderMead, TrajectoryIsMonotone) {
  const auto r = nelder_mead(quad, {3.0, 3.0}, {});
  for (std::size_t k = 1; k < r.trajectory.size(); ++k) EXPECT_LE(r.trajectory[k].value, r.trajectory[k - 1].value);
}

TEST(NelderMead, ZeroBudgetReturnsStart) {
  const auto r = nelder_mead(quad, {0.5, 0.25}, NelderMeadOptions{0, 0.1, 1e-6});
  EXPECT_EQ(r.best_theta, (std::vector<double>{0.5, 0.25}));
  EXPECT_EQ(r.final_theta, r.best_theta);
}

TEST(NelderMead, NonFiniteStartThrows) {
  EXPECT_THROW(nelder_mead([](std::span<const double>) { return NAN; }, {0.0}, {}), DomainError);
}

TEST(SgdFd, QuadraticToy) {
  SgdOptions opt;
  opt.lr = 0.05;
  opt.iters = 200;
  opt.l2 = 0.0;
  const auto r = sgd_fd([](std::size_t) -> ObjectiveFn { return quad; }, {0.0, 0.0}, opt);
  EXPECT_NEAR(r.final_theta[0], 1.0, 1e-3);
  EXPECT_NEAR(r.final_theta[1], -2.0, 1e-3);
  EXPECT_EQ(r.evaluations, 200u * 5);
}

TEST(SgdFd, ZeroLearningRateKeepsTheta) {
  SgdOptions opt;
  opt.lr = 0.0;
  opt.iters = 10;
  const auto r = sgd_fd([](std::size_t) -> ObjectiveFn { return quad; }, {0.3, -0.7}, opt);
  EXPECT_EQ(r.final_theta, (std::vector<double>{0.3, -0.7}));
}

TEST(SgdFd, StopsOnDivergence) {
  SgdOptions opt;
  opt.iters = 50;
  const auto r = sgd_fd([](std::size_t) -> ObjectiveFn { return [](std::span<const double>) { return 1e9; }; }, {0.0},
                        opt);
  EXPECT_EQ(r.stop_reason, "diverged");
  EXPECT_EQ(r.iterations, 1u);
}

TEST(BatchIndices, SortedDistinctAndSeeded) {
  const auto a = batch_indices(100, 10, 42, 3);
  ASSERT_EQ(a.size(), 10u);
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  EXPECT_EQ(std::adjacent_find(a.begin(), a.end()), a.end());
  EXPECT_EQ(a, batch_indices(100, 10, 42, 3));
  EXPECT_NE(a, batch_indices(100, 10, 42, 4));
  EXPECT_EQ(batch_indices(5, 0, 1, 0).size(), 5u);
}

TEST(GridSearch, SinglePoint) {
  const auto [rep, res] = grid_search(quad, ThetaGrid{{{2.0}, {3.0}}});
  EXPECT_EQ(res.values.size(), 1u);
  EXPECT_EQ(rep.best_theta, (std::vector<double>{2.0, 3.0}));
  EXPECT_EQ(rep.best_value, quad(std::vector<double>{2.0, 3.0}));
}

TEST(GridSearch, QuadraticArgmin) {
  const auto g = ThetaGrid::centered(std::vector<double>{0.0, 0.0}, 3.0, 13);  // step 0.5
  const auto [rep, res] = grid_search(quad, g);
  EXPECT_EQ(g.point(res.argmin()), (std::vector<double>{1.0, -2.0}));
  EXPECT_EQ(rep.best_theta, (std::vector<double>{1.0, -2.0}));
  EXPECT_EQ(rep.evaluations, 169u);
}

TEST(GridSearch, CsvLayout) {
  const ThetaGrid g{{{0.0, 1.0}, {2.0}}};
  const std::vector<double> a{1.5, 2.5}, b{0.1, 0.2};
  std::ostringstream os;
  write_grid_csv(os, g, {"contrast", "discordance"}, {&a, &b});
  EXPECT_EQ(os.str(), "theta1,theta2,contrast,discordance\n0,2,1.5,0.1\n1,2,2.5,0.2\n");
}

TEST(Objective, PenaltyFlag) {
  auto o = linear_objective(ou_mixture(1));
  const auto ev = objective_eval(o, std::vector<double>{0, 0, 0, 0});  // constant image
  EXPECT_TRUE(ev.penalized);
  EXPECT_EQ(ev.value, 1e6);
  EXPECT_FALSE(ev.reason.empty());
  Objective h{ou_mixture(1), candidate_family("henon_inverse", 2), {}, 5.0};
  const auto bad = objective_eval(h, std::vector<double>{1.0, 0.0});  // b = 0 is invalid
  EXPECT_TRUE(bad.penalized);
  EXPECT_EQ(bad.value, 5.0);
  EXPECT_THROW(objective_eval(o, std::vector<double>{1.0}), DimensionMismatch);
}

TEST(Objective, IdentityMemberEqualsDirectContrast) {
  const auto data = ou_mixture(2);
  const auto o = linear_objective(data);
  const auto ev = objective_eval(o, std::vector<double>{1, 0, 0, 1});
  EXPECT_FALSE(ev.penalized);
  EXPECT_EQ(ev.value, contrast_ic(data, o.contrast).value);
}

TEST(Objective, MuAboveDepthRejected) {
  auto o = linear_objective(ou_mixture(1));
  o.contrast.mu = 6;
  EXPECT_THROW(grid_search(o, ThetaGrid{{{1}, {0}, {0}, {1}}}), ValidationError);
}

TEST(Objective, IndependentLawIsGridMinimum) {
  // Off-diagonal shears of an exactly independent law: only the zero shear keeps the coordinates independent.
  const auto o = linear_objective(product_law());
  const ObjectiveFn f = [&](std::span<const double> t) {
    return objective_eval(o, std::vector<double>{1.0, t[0], t[1], 1.0}).value;
  };
  const auto g = ThetaGrid::centered(std::vector<double>{0.0, 0.0}, 0.2, 5);
  const auto [rep, res] = grid_search(f, g);
  EXPECT_EQ(rep.best_theta, (std::vector<double>{0.0, 0.0}));
  EXPECT_LT(rep.best_value, 1e-20);
  for (std::size_t i = 0; i < res.values.size(); ++i)
    if (i != res.argmin()) EXPECT_GT(res.values[i], 1e-4);
}

TEST(Determinism, ThreadCountDoesNotChangeResults) {
  const auto o = linear_objective(ou_mixture(3));
  const auto g = ThetaGrid{{{1.0}, {-0.2, 0.0, 0.2}, {0.1, 0.3}, {1.0}}};
  SgdOptions opt;
  opt.iters = 5;
  opt.batch = 8;
  set_max_threads(1);
  const auto [r1, g1] = grid_search(o, g);
  const auto s1 = sgd_fd(o, {1, 0.2, 0.1, 1}, opt, 99);
  set_max_threads(4);
  const auto [r4, g4] = grid_search(o, g);
  const auto s4 = sgd_fd(o, {1, 0.2, 0.1, 1}, opt, 99);
  set_max_threads(0);
  EXPECT_EQ(g1.values, g4.values);
  EXPECT_EQ(s1.final_theta, s4.final_theta);
  EXPECT_EQ(to_json(s1).dump(), to_json(s4).dump());
}

TEST(ReportJson, RoundTripWithoutTimings) {
  const auto r = nelder_mead(quad, {0.0, 0.0}, NelderMeadOptions{50, 0.1, 1e-6});
  const auto j = to_json(r);
  EXPECT_FALSE(j.dump().find("wall") != std::string::npos);
  const auto back = optimizer_report_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(back.best_theta, r.best_theta);
  EXPECT_EQ(back.trajectory.size(), r.trajectory.size());
  EXPECT_EQ(to_json(back), j);
}

TEST(OptionsJson, RoundTrip) {
  SgdOptions s;
  s.lr = 0.2;
  s.batch = 7;
  const auto s2 = sgd_options_from_json(to_json(s));
  EXPECT_EQ(s2.lr, 0.2);
  EXPECT_EQ(s2.batch, 7u);
  NelderMeadOptions n{12, 0.3, 1e-4};
  EXPECT_EQ(nelder_mead_options_from_json(to_json(n)).max_evals, 12u);
  EXPECT_THROW(sgd_options_from_json({{"lr", -1.0}}), ValidationError);
}
