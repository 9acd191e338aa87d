#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace dersim;
using namespace testing_support;

namespace {

RunTrace trace_of(const std::vector<Vector>& ps) {
  RunTrace t;
  for (std::size_t k = 0; k < ps.size(); ++k) {
    StepRecord r;
    r.k = k;
    r.p = ps[k];
    t.records.push_back(r);
  }
  return t;
}

Series geometric(double c, double a, std::size_t len) {
  Series s;
  for (std::size_t k = 0; k < len; ++k) s.push_back(c * std::pow(a, static_cast<double>(k)));
  return s;
}

}  // namespace

TEST(ConvergenceError, EuclideanDistance) {
  DispatchSolution sol;
  sol.p_star = vec({3, 4});
  const auto e = convergence_error(trace_of({vec({0, 0}), vec({3, 4})}), sol);
  EXPECT_DOUBLE_EQ(e[0], 5.0);
  EXPECT_DOUBLE_EQ(e[1], 0.0);
  EXPECT_THROW(convergence_error(trace_of({vec({0, 0, 0})}), sol), DimensionError);
}

TEST(ConvergenceError, PermutationInvariant) {
  DispatchSolution sol;
  sol.p_star = vec({1, 2, 3});
  DispatchSolution permuted;
  permuted.p_star = vec({3, 1, 2});
  const auto a = convergence_error(trace_of({vec({0.5, 2.5, 4})}), sol);
  const auto b = convergence_error(trace_of({vec({4, 0.5, 2.5})}), permuted);
  EXPECT_DOUBLE_EQ(a[0], b[0]);
}

TEST(WeightedNorm, Examples) {
  EXPECT_DOUBLE_EQ(weighted_norm({2, 2, 2, 2}, 0.5, 2), 8.0);
  const auto g = geometric(3.0, 0.8, 50);
  for (std::size_t K : {0u, 5u, 49u}) EXPECT_NEAR(weighted_norm(g, 0.8, K), 3.0, 1e-12);
  EXPECT_THROW(weighted_norm(g, 1.0, 5), ConfigError);
  EXPECT_THROW(weighted_norm(g, 0.0, 5), ConfigError);
  EXPECT_THROW(weighted_norm(g, 0.5, 50), DimensionError);
}

TEST(WeightedNorm, MonotoneInKAndA) {
  const Series s = {1.0, 0.3, 0.5, 0.01, 0.2};
  for (std::size_t K = 1; K < s.size(); ++K) EXPECT_GE(weighted_norm(s, 0.6, K), weighted_norm(s, 0.6, K - 1));
  for (const double a : {0.2, 0.4, 0.6, 0.8}) EXPECT_GE(weighted_norm(s, a, 4), weighted_norm(s, a + 0.1, 4));
}

TEST(FitRate, ExactGeometricSeries) {
  const auto s = geometric(1.0, 0.5, 40);
  const auto est = fit_rate(s, {0, 39});
  EXPECT_NEAR(est.a, 0.5, 1e-12);
  EXPECT_NEAR(est.r2, 1.0, 1e-12);
  EXPECT_FALSE(est.diverging);
  const auto def = fit_rate(geometric(2.0, 0.97, 400));
  EXPECT_NEAR(def.a, 0.97, 1e-12);
}

TEST(FitRate, SmallNoiseBarelyMovesTheRate) {
  auto s = geometric(1.0, 0.5, 21);
  const auto clean = fit_rate(s, {0, 20});
  rng::Sequence draw(3, rng::Stream::instance);
  for (auto& v : s) v += 1e-12 * draw.uniform();
  EXPECT_NEAR(fit_rate(s, {0, 20}).a, clean.a, 1e-3);
}

TEST(FitRate, DivergingSeriesIsFlagged) {
  const auto est = fit_rate(geometric(1.0, 1.1, 30), {0, 29});
  EXPECT_NEAR(est.a, 1.1, 1e-12);
  EXPECT_TRUE(est.diverging);
}

TEST(FitRate, NonPositiveValuesSuggestANewStart) {
  Series s = geometric(1.0, 0.9, 30);
  s[12] = 0.0;
  try {
    fit_rate(s, {5, 29});
    FAIL();
  } catch (const WindowError& e) {
    EXPECT_EQ(e.suggested_start(), 13u);
  }
  EXPECT_THROW(fit_rate(s, {20, 40}), WindowError);
}

TEST(FitRate, DefaultWindowSkipsRoundingPlateau) {
  Series s = geometric(1.0, 0.9, 300);
  for (auto& v : s) v = std::max(v, 1e-10);
  const auto w = default_fit_window(s);
  EXPECT_LT(w.K, 220u);
  EXPECT_NEAR(fit_rate(s).a, 0.9, 1e-9);
}

TEST(InvariantReport, LocalizesInjectedFault) {
  const auto inst = random_instance(8, 5);
  const auto g = random_graph(8, 0.2, GraphMode::undirected, 5);
  AlgorithmParams p;
  p.stepsize = Stepsize::constant(0.01);
  p.xi = 0.2;
  p.n_hat = 8;
  p.horizon = 200;
  auto trace = run(Algorithm::pd1, inst, GraphSchedule(g, 0.2, 5, 200), p);
  EXPECT_TRUE(invariant_report(trace).conservation.passed());
  trace.records[73].y[2] += 1e-6;
  const auto rep = invariant_report(trace);
  ASSERT_FALSE(rep.conservation.passed());
  EXPECT_EQ(*rep.conservation.first_violation, 73u);
  EXPECT_GT(rep.conservation.max_residual, 9e-7);
}

TEST(InvariantReport, VFloorMarginOnRobustRun) {
  const auto g = random_graph(3, 0.0, GraphMode::directed, 1);
  const auto inst = random_instance(3, 1);
  AlgorithmParams p;
  p.stepsize = Stepsize::constant(0.02);
  p.xi = 0.2;
  p.n_hat = 2;
  p.horizon = 100;
  const GraphSchedule schedule(g, 0.2, 4, 100);
  const auto trace = run(Algorithm::robust, inst, schedule, p);
  const auto b = smallest_connectivity_window(schedule, 20);
  ASSERT_TRUE(b.has_value());
  const double floor = push_weight_floor(3, 3 + g.edge_count(), p.gamma, *b);
  const auto rep = invariant_report(trace, floor);
  EXPECT_TRUE(rep.v_floor.passed());
  EXPECT_GT(rep.v_floor_margin, 1.0);
}

TEST(PushWeightFloor, ClosedForm) {
  const double tau = 0.1 / 3;
  EXPECT_NEAR(push_weight_floor(3, 6, 0.9, 1) / ((0.1 / 3) * std::pow(tau, 6)), 1.0, 1e-14);
  EXPECT_GT(push_weight_floor(3, 6, 0.9, 2), 0.0);
  EXPECT_LT(product_entry_floor(3, 6, 0.9, 1), push_weight_floor(3, 6, 0.9, 1));
}

TEST(Diagnostics, FeedbackSignals) {
  StepRecord r;
  r.p = vec({1, 2});
  r.lambda = vec({2, 4});
  r.v = vec({1, 1});
  r.x = vec({2, 4});
  const Vector e = consensus_deviation(r);
  EXPECT_EQ(e, vec({-1, 1}));
  DispatchSolution sol;
  sol.p_star = vec({1, 1});
  sol.lambda_star = 3.0;
  sol.n_hat = 2.0;
  const Vector z = optimality_gap(r, sol);
  EXPECT_EQ(z, vec({0, 1, -1, 1}));
}
