#pragma once

// Exact optimum by bisection on the scalar multiplier, and the centralized
// projected primal-dual iteration used as a baseline.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>

#include "dersim/errors.hpp"
#include "dersim/problem.hpp"
#include "dersim/trace.hpp"

namespace dersim {

/// Optimal dispatch with lambda_star in the scaled convention: stationarity
/// reads f_i'(p_i) = xi (n_hat/n) lambda_star + nu_i - mu_i.
struct DispatchSolution {
  Vector p_star;
  double lambda_star = 0.0;
  Vector mu_star;
  Vector nu_star;
  double kkt_residual = 0.0;

  double xi = 1.0;
  double n_hat = 1.0;
  std::size_t iterations = 0;
  double initial_bracket_width = 0.0;
  double final_bracket_width = 0.0;

  /// Value every local multiplier estimate takes at the distributed fixed
  /// point, (n_hat/n) lambda_star. Also the equilibrium of the centralized
  /// iteration's lambda-bar.
  double agent_multiplier() const {
    return n_hat / static_cast<double>(p_star.size()) * lambda_star;
  }
};

/// p_i(price) = clamp((f_i')^{-1}(price), lower_i, upper_i).
inline Vector dispatch_at_price(const ProblemInstance& inst, double price) {
  Vector p(inst.load.size());
  for (std::size_t i = 0; i < inst.size(); ++i) {
    p[i] = inst.cost.inverse_derivative(i, price, inst.lower[i], inst.upper[i]);
  }
  return p;
}

inline DispatchSolution solve_bisection(const ProblemInstance& inst, double xi, double n_hat, double tol = 1e-12) {
  validate(inst);
  if (!(xi > 0.0) || !(n_hat > 0.0)) throw ConfigError("solve_bisection: xi and n_hat must be positive");
  const std::size_t n = inst.size();
  const double scale = multiplier_scale(xi, n_hat, n);
  const double demand = inst.total_load();

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    lo = std::min(lo, inst.cost.derivative(i, inst.lower[i]) / scale);
    hi = std::max(hi, inst.cost.derivative(i, inst.upper[i]) / scale);
  }
  lo -= 1.0;
  hi += 1.0;

  DispatchSolution sol;
  sol.xi = xi;
  sol.n_hat = n_hat;
  sol.initial_bracket_width = hi - lo;

  auto imbalance = [&](double lambda) { return dispatch_at_price(inst, scale * lambda).sum() - demand; };

  double best_lambda = lo;
  double best_residual = std::abs(imbalance(lo));
  if (const double r = std::abs(imbalance(hi)); r < best_residual) {
    best_residual = r;
    best_lambda = hi;
  }
  while (best_residual > tol) {
    const double mid = lo + 0.5 * (hi - lo);
    if (mid <= lo || mid >= hi) break;
    const double r = imbalance(mid);
    ++sol.iterations;
    if (std::abs(r) < best_residual) {
      best_residual = std::abs(r);
      best_lambda = mid;
    }
    if (r < 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  sol.final_bracket_width = hi - lo;
  sol.lambda_star = best_lambda;
  sol.p_star = dispatch_at_price(inst, scale * best_lambda);

  const double price = scale * best_lambda;
  sol.mu_star = Vector::Zero(static_cast<Eigen::Index>(n));
  sol.nu_star = Vector::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double gap = inst.cost.derivative(i, sol.p_star[i]) - price;
    if (sol.p_star[i] >= inst.upper[i]) sol.mu_star[i] = std::max(0.0, -gap);
    if (sol.p_star[i] <= inst.lower[i]) sol.nu_star[i] = std::max(0.0, gap);
  }
  sol.kkt_residual = kkt_residual(inst, sol.p_star, sol.lambda_star, xi, n_hat);
  return sol;
}

namespace detail {

inline bool all_finite(const Vector& v) { return v.allFinite(); }

/// Flags runs whose late increments are not clearly smaller than the early ones.
inline void monitor_contraction(RunTrace& trace) {
  const auto& rec = trace.records;
  if (rec.size() < 20) return;
  const std::size_t steps = rec.size() - 1;
  const std::size_t window = std::max<std::size_t>(1, steps / 10);
  auto increment = [&](std::size_t k) {
    return (rec[k + 1].p - rec[k].p).norm() + (rec[k + 1].lambda - rec[k].lambda).norm();
  };
  double early = 0.0;
  double late = 0.0;
  for (std::size_t k = 0; k < window; ++k) early = std::max(early, increment(k));
  for (std::size_t k = steps - window; k < steps; ++k) late = std::max(late, increment(k));
  if (late > 1e-12 && late >= 0.5 * early) {
    trace.warnings.push_back("iterates are not contracting: late increment " + std::to_string(late) +
                             " vs early increment " + std::to_string(early) + "; stepsize may be too large");
  }
}

}  // namespace detail

/// p[k+1] = proj(p[k] - s grad f(p[k]) + s xi lambda_bar[k] 1),
/// lambda_bar[k+1] = lambda_bar[k] - s 1'(p[k] - load), for k < params.horizon.
inline RunTrace centralized_pd_run(const ProblemInstance& inst, const AlgorithmParams& params, const Vector& p0,
                                   double lambda0, const DispatchSolution* solution = nullptr) {
  validate(inst);
  const std::size_t n = inst.size();
  require_size(p0, n, "centralized_pd_run initial power");
  RunTrace trace;
  trace.meta.algorithm = "centralized";
  trace.meta.params = params;
  trace.meta.n = n;
  trace.meta.load = inst.load;
  trace.warnings = check_params(params, n);

  Vector p = p0;
  double lambda_bar = lambda0;
  auto record = [&](std::size_t k) {
    StepRecord r;
    r.k = k;
    r.p = p;
    r.lambda = Vector::Constant(1, lambda_bar);
    r.consensus_spread = 0.0;
    if (solution != nullptr) r.err_p = (p - solution->p_star).norm();
    trace.records.push_back(std::move(r));
  };
  record(0);
  for (std::size_t k = 0; k < params.horizon; ++k) {
    const double s = params.stepsize.at(k);
    const Vector grad = cost_grad(inst.cost, p);
    const double imbalance = (p - inst.load).sum();
    const Vector raw = p - s * grad + Vector::Constant(p.size(), s * params.xi * lambda_bar);
    lambda_bar -= s * imbalance;
    if (!detail::all_finite(raw) || !std::isfinite(lambda_bar)) {
      throw DivergenceError("centralized primal-dual produced a non-finite iterate", k + 1);
    }
    p = project_box(raw, inst.lower, inst.upper);
    record(k + 1);
  }
  detail::monitor_contraction(trace);
  return trace;
}

}  // namespace dersim
