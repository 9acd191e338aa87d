#pragma once

// Post-processing of run traces: error series, the exponentially weighted
// norm, geometric rate fits and invariant summaries.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dersim/errors.hpp"
#include "dersim/oracle.hpp"
#include "dersim/trace.hpp"

namespace dersim {

/// Residual budgets shared by tests, the CLI summary and invariant_report.
namespace budget {
inline constexpr double conservation = 1e-9;
inline constexpr double mass = 1e-12;
inline constexpr double stochasticity = 1e-12;
inline constexpr double consensus_spread = 1e-8;
/// Errors below this are treated as converged and left out of rate fits.
inline constexpr double fit_floor = 100.0 * std::numeric_limits<double>::epsilon();
}  // namespace budget

using Series = std::vector<double>;

/// ||p[k] - p*||_2 for every record.
inline Series convergence_error(const RunTrace& trace, const DispatchSolution& solution) {
  Series out;
  out.reserve(trace.records.size());
  for (const auto& r : trace.records) {
    if (r.p.size() != solution.p_star.size()) {
      throw DimensionError("convergence_error: record p", static_cast<std::size_t>(solution.p_star.size()),
                           static_cast<std::size_t>(r.p.size()));
    }
    out.push_back((r.p - solution.p_star).norm());
  }
  return out;
}

/// max over 0 <= k <= K of a^{-k} value[k].
inline double weighted_norm(const Series& series, double a, std::size_t K) {
  if (!(a > 0.0 && a < 1.0)) throw ConfigError("weighted_norm: a must lie in (0, 1)");
  if (K >= series.size()) {
    throw DimensionError("weighted_norm: horizon", series.size(), K + 1);
  }
  const double log_a = std::log(a);
  double best = 0.0;
  for (std::size_t k = 0; k <= K; ++k) {
    const double v = std::abs(series[k]);
    if (v == 0.0) continue;
    best = std::max(best, std::exp(std::log(v) - static_cast<double>(k) * log_a));
  }
  return best;
}

struct FitWindow {
  std::size_t k0 = 0;
  std::size_t K = 0;  // inclusive
};

struct RateEstimate {
  double a = kNotApplicable;
  std::size_t k0 = 0;
  std::size_t K = 0;
  double r2 = kNotApplicable;
  Series residuals;  // log-space residuals of the fitted line
  std::size_t points = 0;
  bool diverging = false;
};

/// Last half of the steps before the series settles: the first k where the
/// value drops below the fit floor or within a factor 10 of the series minimum.
inline FitWindow default_fit_window(const Series& series) {
  if (series.empty()) throw WindowError("default_fit_window: empty series", 0);
  double lowest = std::numeric_limits<double>::infinity();
  for (const double v : series) {
    if (std::isfinite(v)) lowest = std::min(lowest, v);
  }
  const double floor = std::max(budget::fit_floor * std::max(1.0, std::abs(series.front())), 10.0 * lowest);
  std::size_t end = series.size() - 1;
  for (std::size_t k = 0; k < series.size(); ++k) {
    if (!(series[k] > floor)) {
      end = k == 0 ? 0 : k - 1;
      break;
    }
  }
  return {end / 2, end};
}

/// Least-squares line through (k, log value[k]) on the window; a = exp(slope).
inline RateEstimate fit_rate(const Series& series, FitWindow window) {
  if (window.K >= series.size() || window.k0 > window.K) {
    throw WindowError("fit_rate: window [" + std::to_string(window.k0) + ", " + std::to_string(window.K) +
                          "] outside series of length " + std::to_string(series.size()),
                      0);
  }
  for (std::size_t k = window.K + 1; k-- > window.k0;) {
    if (!(series[k] > 0.0) || !std::isfinite(series[k])) {
      throw WindowError("fit_rate: non-positive or non-finite value at k=" + std::to_string(k), k + 1);
    }
  }
  std::vector<double> ks;
  std::vector<double> ls;
  for (std::size_t k = window.k0; k <= window.K; ++k) {
    if (series[k] < budget::fit_floor) continue;
    ks.push_back(static_cast<double>(k));
    ls.push_back(std::log(series[k]));
  }
  if (ks.size() < 2) {
    throw WindowError("fit_rate: fewer than two values above the fit floor in the window", window.k0);
  }
  const double m = static_cast<double>(ks.size());
  double mk = 0.0;
  double ml = 0.0;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    mk += ks[i];
    ml += ls[i];
  }
  mk /= m;
  ml /= m;
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    sxx += (ks[i] - mk) * (ks[i] - mk);
    sxy += (ks[i] - mk) * (ls[i] - ml);
    syy += (ls[i] - ml) * (ls[i] - ml);
  }
  const double slope = sxy / sxx;
  const double intercept = ml - slope * mk;

  RateEstimate est;
  est.k0 = window.k0;
  est.K = window.K;
  est.points = ks.size();
  est.a = std::exp(slope);
  est.diverging = est.a > 1.0;
  double ss_res = 0.0;
  est.residuals.reserve(ks.size());
  for (std::size_t i = 0; i < ks.size(); ++i) {
    const double res = ls[i] - (intercept + slope * ks[i]);
    est.residuals.push_back(res);
    ss_res += res * res;
  }
  est.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  return est;
}

inline RateEstimate fit_rate(const Series& series) { return fit_rate(series, default_fit_window(series)); }

/// ((1-gamma)/n) tau^{N(2B-1)} with tau = min(gamma, 1-gamma)/n. N counts real
/// plus virtual nodes.
inline double push_weight_floor(std::size_t n, std::size_t N, double gamma, std::size_t B) {
  const double nd = static_cast<double>(n);
  const double tau = std::min(gamma, 1.0 - gamma) / nd;
  const double exponent = static_cast<double>(N) * (2.0 * static_cast<double>(B) - 1.0);
  return (1.0 - gamma) / nd * std::pow(tau, exponent);
}

/// Entry floor for products of B-window augmented matrices.
inline double product_entry_floor(std::size_t n, std::size_t N, double gamma, std::size_t B) {
  const double nd = static_cast<double>(n);
  const double tau = std::min(gamma, 1.0 - gamma) / nd;
  const double exponent = static_cast<double>(N) * (2.0 * static_cast<double>(B) - 1.0) + 1.0;
  return (1.0 - gamma) / (nd * nd) * std::pow(tau, exponent);
}

/// Deviation of the multiplier estimates from their current average.
inline Vector consensus_deviation(const StepRecord& r) {
  const Vector& x = r.consensus();
  const double mean = r.lambda.size() > 0 ? r.lambda.mean() : 0.0;
  return x.array() - mean;
}

/// (p - p*, x - agent multiplier) stacked.
inline Vector optimality_gap(const StepRecord& r, const DispatchSolution& sol) {
  const Vector& x = r.consensus();
  Vector z(r.p.size() + x.size());
  z << r.p - sol.p_star, x.array() - sol.agent_multiplier();
  return z;
}

struct InvariantCheck {
  std::string name;
  double max_residual = 0.0;
  double budget = 0.0;
  bool applicable = false;
  std::optional<std::size_t> first_violation;
  bool passed() const { return !first_violation.has_value(); }
};

struct InvariantReport {
  InvariantCheck conservation{"conservation"};
  InvariantCheck mass{"mass"};
  InvariantCheck stochasticity{"stochasticity"};
  InvariantCheck v_floor{"v_floor"};
  InvariantCheck consensus_spread{"consensus_spread"};
  double min_v = kNotApplicable;
  /// min_v over the floor; NaN without a floor.
  double v_floor_margin = kNotApplicable;

  bool passed() const {
    return conservation.passed() && mass.passed() && stochasticity.passed() && v_floor.passed() &&
           consensus_spread.passed();
  }
};

namespace detail {

inline void observe(InvariantCheck& c, double residual, std::size_t k) {
  if (std::isnan(residual)) return;
  c.applicable = true;
  c.max_residual = std::max(c.max_residual, residual);
  if (residual > c.budget && !c.first_violation) c.first_violation = k;
}

}  // namespace detail

/// Recomputes residuals from the recorded vectors. The spread budget applies
/// to the final record only; v_floor is checked when a floor is supplied.
inline InvariantReport invariant_report(const RunTrace& trace, std::optional<double> v_floor = std::nullopt) {
  InvariantReport rep;
  rep.conservation.budget = budget::conservation;
  rep.mass.budget = budget::mass;
  rep.stochasticity.budget = budget::stochasticity;
  rep.consensus_spread.budget = budget::consensus_spread;
  rep.v_floor.budget = v_floor.value_or(0.0);
  const double n_hat = trace.meta.params.n_hat;
  for (const auto& r : trace.records) {
    if (r.y.size() > 0 && trace.meta.load.size() == r.p.size()) {
      detail::observe(rep.conservation, conservation_residual(r, trace.meta.load, n_hat), r.k);
    }
    detail::observe(rep.mass, mass_residual(r), r.k);
    detail::observe(rep.stochasticity, r.stochasticity_residual, r.k);
    if (r.v.size() > 0 && r.k > 0) {
      double lowest = r.v.minCoeff();
      if (!std::isnan(r.v_virtual_min)) lowest = std::min(lowest, r.v_virtual_min);
      rep.min_v = std::isnan(rep.min_v) ? lowest : std::min(rep.min_v, lowest);
      if (v_floor) {
        rep.v_floor.applicable = true;
        if (lowest < *v_floor && !rep.v_floor.first_violation) rep.v_floor.first_violation = r.k;
      }
    }
    const double s = spread(r.consensus());
    if (!std::isnan(s)) {
      rep.consensus_spread.applicable = true;
      rep.consensus_spread.max_residual = std::max(rep.consensus_spread.max_residual, s);
    }
  }
  if (!trace.records.empty()) {
    const auto& last = trace.records.back();
    const double s = spread(last.consensus());
    if (!std::isnan(s) && s > budget::consensus_spread) rep.consensus_spread.first_violation = last.k;
  }
  if (v_floor && !std::isnan(rep.min_v) && *v_floor > 0.0) rep.v_floor_margin = rep.min_v / *v_floor;
  return rep;
}

}  // namespace dersim
