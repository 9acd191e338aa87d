#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace dersim;
using namespace testing_support;

TEST(CostModel, QuadraticDerivativesMatchFiniteDifferences) {
  const auto cost = CostModel::quadratic(vec({0.7, 2.0}), vec({1.5, -3.0}), vec({4.0, 0.0}));
  const double h = 1e-6;
  for (std::size_t i = 0; i < 2; ++i) {
    for (const double p : {-2.0, 0.0, 0.3, 5.0}) {
      const double fd = (cost.value(i, p + h) - cost.value(i, p - h)) / (2 * h);
      EXPECT_NEAR(cost.derivative(i, p), fd, 1e-6);
      const double fd2 = (cost.derivative(i, p + h) - cost.derivative(i, p - h)) / (2 * h);
      EXPECT_NEAR(cost.second_derivative(i, p), fd2, 1e-6);
    }
  }
  EXPECT_DOUBLE_EQ(cost.strong_convexity(), 1.4);
}

TEST(CostModel, RejectsNonPositiveCurvature) {
  EXPECT_THROW(CostModel::pure_quadratic(vec({1.0, 0.0})), InvalidCostError);
  EXPECT_THROW(CostModel::pure_quadratic(vec({-1.0})), InvalidCostError);
}

TEST(CostModel, GeneralHookInverseDerivative) {
  ConvexHook hook;
  hook.n = 1;
  hook.value = [](std::size_t, double p) { return std::exp(p) + p * p; };
  hook.derivative = [](std::size_t, double p) { return std::exp(p) + 2 * p; };
  hook.second_derivative = [](std::size_t, double p) { return std::exp(p) + 2; };
  hook.strong_convexity = 2.0;
  const auto cost = CostModel::general(hook);
  const double p = cost.inverse_derivative(0, 3.0, -5.0, 5.0);
  EXPECT_NEAR(std::exp(p) + 2 * p, 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(cost.inverse_derivative(0, -100.0, -5.0, 5.0), -5.0);
  EXPECT_DOUBLE_EQ(cost.inverse_derivative(0, 1e6, -5.0, 5.0), 5.0);
}

TEST(CostModel, GeneralHookFailingCurvatureIsRejected) {
  ConvexHook hook;
  hook.n = 1;
  hook.value = [](std::size_t, double p) { return p * p * p * p; };
  hook.derivative = [](std::size_t, double p) { return 4 * p * p * p; };
  hook.second_derivative = [](std::size_t, double p) { return 12 * p * p; };
  hook.strong_convexity = 1.0;
  const ProblemInstance inst{vec({0.5}), vec({-1}), vec({1}), CostModel::general(hook)};
  EXPECT_THROW(validate(inst), InvalidCostError);
}

TEST(Validate, DetectsBadInstances) {
  EXPECT_NO_THROW(validate(waterfilling_instance()));
  auto inverted = waterfilling_instance();
  inverted.lower[1] = 11.0;
  EXPECT_THROW(validate(inverted), InvalidInstanceError);
  auto short_load = waterfilling_instance();
  short_load.lower = vec({0, 0});
  EXPECT_THROW(validate(short_load), DimensionError);
  auto too_much = waterfilling_instance();
  too_much.load = vec({20, 20, 20});
  EXPECT_THROW(validate(too_much), InfeasibleError);
  auto too_little = waterfilling_instance();
  too_little.lower = vec({1, 1, 1.5});
  EXPECT_THROW(validate(too_little), InfeasibleError);
  auto nan_load = waterfilling_instance();
  nan_load.load[0] = std::nan("");
  EXPECT_THROW(validate(nan_load), InvalidInstanceError);
}

TEST(ProjectBox, ClampsAndKeepsInterior) {
  const auto p = project_box(vec({-1, 0.5, 7}), vec({0, 0, 0}), vec({1, 1, 5}));
  EXPECT_EQ(p, vec({0, 0.5, 5}));
  EXPECT_THROW(project_box(vec({0}), vec({2}), vec({1})), InvalidInstanceError);
  EXPECT_THROW(project_box(vec({0, 1}), vec({0}), vec({1})), DimensionError);
}

TEST(Stepsize, ConstantAndDiminishing) {
  EXPECT_DOUBLE_EQ(Stepsize::constant(0.01).at(12345), 0.01);
  const auto d = Stepsize::diminishing(1.0, 100.0);
  EXPECT_DOUBLE_EQ(d.at(0), 0.01);
  EXPECT_DOUBLE_EQ(d.at(100), 0.005);
}

TEST(CheckParams, HardErrorsAndWarnings) {
  AlgorithmParams p;
  p.xi = 0.05;
  p.n_hat = 39;
  EXPECT_TRUE(check_params(p, 39).empty());
  p.xi = 2.0;
  EXPECT_EQ(check_params(p, 39).size(), 1u);
  p.gamma = 1.0;
  EXPECT_THROW(check_params(p, 39), ConfigError);
  p.gamma = 0.5;
  p.stepsize = Stepsize::constant(0.0);
  EXPECT_THROW(check_params(p, 39), ConfigError);
}

TEST(KktResidual, ZeroAtOptimumAndPositiveElsewhere) {
  const auto inst = waterfilling_instance();
  const Vector p = vec({12.0 / 7, 6.0 / 7, 3.0 / 7});
  EXPECT_LT(kkt_residual(inst, p, 24.0 / 7, 1.0, 3.0), 1e-14);
  EXPECT_GT(kkt_residual(inst, p, 3.0, 1.0, 3.0), 0.1);
  EXPECT_GE(kkt_residual(inst, vec({1, 1, 1.5}), 24.0 / 7, 1.0, 3.0), 0.5);
}

TEST(KktResidual, RespectsSignAtBounds) {
  // Agent at its upper bound may have marginal cost below the price, not above.
  const auto inst = quadratic_instance(vec({1, 1}), vec({1, 1}), vec({0, 0}), vec({0.5, 5}));
  const Vector p = vec({0.5, 1.5});
  EXPECT_LT(kkt_residual(inst, p, 3.0, 1.0, 2.0), 1e-14);
  EXPECT_GT(kkt_residual(inst, vec({0.5, 1.5}), 0.5, 1.0, 2.0), 0.4);
}
