#pragma once

// Dispatch problem: minimize sum_i f_i(p_i) s.t. 1'p = 1'load, lower <= p <= upper.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "dersim/errors.hpp"

namespace dersim {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline void require_size(const Vector& v, std::size_t n, const char* what) {
  if (static_cast<std::size_t>(v.size()) != n) {
    throw DimensionError(what, n, static_cast<std::size_t>(v.size()));
  }
}

/// f_i(p) = a_i p^2 + b_i p + c_i.
struct QuadraticCost {
  Vector a;
  Vector b;
  Vector c;
};

/// User-supplied convex costs. The simulator never differentiates numerically,
/// so value, first and second derivative are all required, together with the
/// declared strong-convexity modulus.
struct ConvexHook {
  std::size_t n = 0;
  std::function<double(std::size_t, double)> value;
  std::function<double(std::size_t, double)> derivative;
  std::function<double(std::size_t, double)> second_derivative;
  double strong_convexity = 0.0;
};

class CostModel {
 public:
  CostModel() = default;

  static CostModel quadratic(Vector a, Vector b, Vector c) {
    if (b.size() != a.size()) throw DimensionError("quadratic cost b", a.size(), b.size());
    if (c.size() != a.size()) throw DimensionError("quadratic cost c", a.size(), c.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      if (!(a[i] > 0.0) || !std::isfinite(a[i])) {
        throw InvalidCostError("quadratic coefficient a[" + std::to_string(i) +
                               "] must be positive and finite");
      }
    }
    CostModel m;
    m.model_ = QuadraticCost{std::move(a), std::move(b), std::move(c)};
    return m;
  }

  /// f_i(p) = a_i p^2.
  static CostModel pure_quadratic(Vector a) {
    const auto n = a.size();
    return quadratic(std::move(a), Vector::Zero(n), Vector::Zero(n));
  }

  static CostModel general(ConvexHook hook) {
    if (!hook.value || !hook.derivative || !hook.second_derivative) {
      throw InvalidCostError("general cost hook needs value, derivative and second derivative");
    }
    if (!(hook.strong_convexity > 0.0)) {
      throw InvalidCostError("declared strong-convexity modulus must be positive");
    }
    CostModel m;
    m.model_ = std::move(hook);
    return m;
  }

  std::size_t size() const {
    if (const auto* q = std::get_if<QuadraticCost>(&model_)) return static_cast<std::size_t>(q->a.size());
    return std::get<ConvexHook>(model_).n;
  }

  bool is_quadratic() const { return std::holds_alternative<QuadraticCost>(model_); }

  const QuadraticCost* quadratic_coefficients() const { return std::get_if<QuadraticCost>(&model_); }

  double value(std::size_t i, double p) const {
    if (const auto* q = std::get_if<QuadraticCost>(&model_)) return (q->a[i] * p + q->b[i]) * p + q->c[i];
    return std::get<ConvexHook>(model_).value(i, p);
  }

  double derivative(std::size_t i, double p) const {
    if (const auto* q = std::get_if<QuadraticCost>(&model_)) return 2.0 * q->a[i] * p + q->b[i];
    return std::get<ConvexHook>(model_).derivative(i, p);
  }

  double second_derivative(std::size_t i, double p) const {
    if (const auto* q = std::get_if<QuadraticCost>(&model_)) return 2.0 * q->a[i];
    return std::get<ConvexHook>(model_).second_derivative(i, p);
  }

  /// Modulus m with f_i'' >= m. For quadratics this is 2 min_i a_i.
  double strong_convexity() const {
    if (const auto* q = std::get_if<QuadraticCost>(&model_)) return 2.0 * q->a.minCoeff();
    return std::get<ConvexHook>(model_).strong_convexity;
  }

  /// Solves f_i'(p) = target over [lo, hi], clamping at the ends. f_i' is
  /// strictly increasing, so the result is nondecreasing in target.
  double inverse_derivative(std::size_t i, double target, double lo, double hi) const {
    if (const auto* q = std::get_if<QuadraticCost>(&model_)) {
      return std::clamp((target - q->b[i]) / (2.0 * q->a[i]), lo, hi);
    }
    if (derivative(i, lo) >= target) return lo;
    if (derivative(i, hi) <= target) return hi;
    double a = lo;
    double b = hi;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (a + b);
      if (mid <= a || mid >= b) break;
      if (derivative(i, mid) < target) {
        a = mid;
      } else {
        b = mid;
      }
    }
    return 0.5 * (a + b);
  }

 private:
  std::variant<QuadraticCost, ConvexHook> model_{QuadraticCost{}};
};

struct ProblemInstance {
  Vector load;
  Vector lower;
  Vector upper;
  CostModel cost;

  std::size_t size() const { return static_cast<std::size_t>(load.size()); }
  double total_load() const { return load.sum(); }
};

/// Best-effort strong-convexity check. Quadratics are exact; general hooks
/// are sampled on 1000 uniform grid points per agent interval.
inline void validate_cost(const CostModel& cost, const Vector& lower, const Vector& upper) {
  const double m = cost.strong_convexity();
  if (!(m > 0.0)) throw InvalidCostError("strong-convexity modulus must be positive");
  if (cost.is_quadratic()) return;
  constexpr int kSamples = 1000;
  for (std::size_t i = 0; i < cost.size(); ++i) {
    const double lo = lower[i];
    const double hi = upper[i];
    for (int s = 0; s < kSamples; ++s) {
      const double p = lo + (hi - lo) * s / (kSamples - 1);
      const double h = cost.second_derivative(i, p);
      if (!(h >= m)) {
        throw InvalidCostError("agent " + std::to_string(i) + ": second derivative " + std::to_string(h) +
                               " below declared modulus " + std::to_string(m) + " at p = " +
                               std::to_string(p));
      }
    }
  }
}

/// Checks dimensions, box ordering, finiteness, convexity and feasibility.
inline void validate(const ProblemInstance& inst) {
  const std::size_t n = inst.size();
  if (n == 0) throw InvalidInstanceError("instance has no agents");
  require_size(inst.lower, n, "lower capacity");
  require_size(inst.upper, n, "upper capacity");
  if (inst.cost.size() != n) throw DimensionError("cost model", n, inst.cost.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(inst.load[i]) || !std::isfinite(inst.lower[i]) || !std::isfinite(inst.upper[i])) {
      throw InvalidInstanceError("agent " + std::to_string(i) + ": non-finite load or capacity");
    }
    if (inst.lower[i] > inst.upper[i]) {
      throw InvalidInstanceError("agent " + std::to_string(i) + ": lower capacity " +
                                 std::to_string(inst.lower[i]) + " exceeds upper capacity " +
                                 std::to_string(inst.upper[i]));
    }
  }
  validate_cost(inst.cost, inst.lower, inst.upper);
  const double lo = inst.lower.sum();
  const double hi = inst.upper.sum();
  const double demand = inst.total_load();
  if (lo > demand) {
    throw InfeasibleError("sum of lower capacities " + std::to_string(lo) + " exceeds total load " +
                          std::to_string(demand));
  }
  if (demand > hi) {
    throw InfeasibleError("total load " + std::to_string(demand) + " exceeds sum of upper capacities " +
                          std::to_string(hi));
  }
}

/// Either a constant s or the diminishing schedule s[k] = a / (k + b).
struct Stepsize {
  enum class Kind { constant, diminishing };
  Kind kind = Kind::constant;
  double value = 0.01;
  double a = 1.0;
  double b = 100.0;

  static Stepsize constant(double s) { return {Kind::constant, s, 1.0, 100.0}; }
  static Stepsize diminishing(double a, double b) { return {Kind::diminishing, 0.0, a, b}; }

  double at(std::size_t k) const {
    return kind == Kind::constant ? value : a / (static_cast<double>(k) + b);
  }
};

struct AlgorithmParams {
  Stepsize stepsize = Stepsize::constant(0.01);
  double xi = 1.0;
  double n_hat = 1.0;
  double gamma = 0.9;
  std::size_t horizon = 0;
};

/// Hard parameter errors throw; soft range violations come back as warnings.
inline std::vector<std::string> check_params(const AlgorithmParams& params, std::size_t n) {
  const auto& st = params.stepsize;
  if (st.kind == Stepsize::Kind::constant && !(st.value > 0.0)) throw ConfigError("stepsize must be positive");
  if (st.kind == Stepsize::Kind::diminishing && !(st.a > 0.0 && st.b > 0.0)) {
    throw ConfigError("diminishing stepsize needs a > 0 and b > 0");
  }
  if (!(params.xi > 0.0)) throw ConfigError("xi must be positive");
  if (!(params.n_hat > 0.0)) throw ConfigError("n_hat must be positive");
  if (!(params.gamma > 0.0 && params.gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  std::vector<std::string> warnings;
  if (params.xi * params.n_hat > static_cast<double>(n)) {
    warnings.push_back("xi * n_hat = " + std::to_string(params.xi * params.n_hat) + " exceeds n = " +
                       std::to_string(n) + "; convergence is not guaranteed");
  }
  return warnings;
}

/// The factor xi * n_hat / n that multiplies lambda in the stationarity
/// condition shared by every algorithm's fixed point.
inline double multiplier_scale(double xi, double n_hat, std::size_t n) {
  return xi * n_hat / static_cast<double>(n);
}

inline Vector cost_grad(const CostModel& cost, const Vector& p) {
  require_size(p, cost.size(), "cost_grad argument");
  Vector g(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) g[i] = cost.derivative(static_cast<std::size_t>(i), p[i]);
  return g;
}

inline Vector project_box(const Vector& p, const Vector& lo, const Vector& hi) {
  const auto n = static_cast<std::size_t>(p.size());
  require_size(lo, n, "project_box lower bound");
  require_size(hi, n, "project_box upper bound");
  Vector out(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (lo[i] > hi[i]) {
      throw InvalidInstanceError("project_box: lower bound exceeds upper bound at index " + std::to_string(i));
    }
    out[i] = std::clamp(p[i], lo[i], hi[i]);
  }
  return out;
}

/// Residual of the KKT system
///   f'(p) - xi (n_hat/n) lambda 1 + mu - nu = 0,  1'(p - load) = 0,
///   mu, nu >= 0 with complementary slackness on the box.
/// Zero exactly when (p, lambda) solves it.
inline double kkt_residual(const ProblemInstance& inst, const Vector& p, double lambda, double xi, double n_hat) {
  const std::size_t n = inst.size();
  require_size(p, n, "kkt_residual power vector");
  const double price = multiplier_scale(xi, n_hat, n) * lambda;
  double worst = std::abs((p - inst.load).sum());
  for (std::size_t i = 0; i < n; ++i) {
    const double gap = inst.cost.derivative(i, p[i]) - price;
    const bool at_upper = p[i] >= inst.upper[i];
    const bool at_lower = p[i] <= inst.lower[i];
    double violation = 0.0;
    if (at_upper && at_lower) {
      violation = 0.0;
    } else if (at_upper) {
      violation = std::max(0.0, gap);
    } else if (at_lower) {
      violation = std::max(0.0, -gap);
    } else {
      violation = std::abs(gap);
    }
    worst = std::max(worst, violation);
  }
  return worst;
}

}  // namespace dersim
