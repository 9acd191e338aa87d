#pragma once

// Distributed primal-dual step functions. Every step is pure: state in, state
// out. Within a round the primal update reads the round-k multiplier signal,
// the mixing steps read round-k values, and the imbalance tracker adds
// n_hat (p[k+1] - p[k]) using the freshly updated power.

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dersim/errors.hpp"
#include "dersim/network.hpp"
#include "dersim/problem.hpp"

namespace dersim {

/// Undirected gradient-tracking algorithm (and its crude variant, which leaves y empty).
struct UndirectedState {
  std::size_t k = 0;
  Vector p;
  Vector lambda;
  Vector y;
};

/// Push-sum algorithm over a directed graph with known instantaneous out-degrees.
struct DirectedState {
  std::size_t k = 0;
  Vector p;
  Vector lambda;
  Vector v;
  Vector x;
  Vector y;
};

/// Per-entry running sum held as an unevaluated pair hi + lo, so that the
/// difference of two long sums keeps the precision of a single increment.
struct RunningSum {
  Vector hi;
  Vector lo;

  static RunningSum zeros(Eigen::Index n) { return {Vector::Zero(n), Vector::Zero(n)}; }

  Eigen::Index size() const { return hi.size(); }
  double value(Eigen::Index i) const { return hi[i] + lo[i]; }

  void add(Eigen::Index i, double x) {
    const double s = hi[i] + x;
    const double bb = s - hi[i];
    const double err = (hi[i] - (s - bb)) + (x - bb);
    const double l = lo[i] + err;
    hi[i] = s + l;
    lo[i] = l - (hi[i] - s);
  }

  /// this[i] - other[j].
  double minus(Eigen::Index i, const RunningSum& other, Eigen::Index j) const {
    return (hi[i] - other.hi[j]) + (lo[i] - other.lo[j]);
  }
};

/// Running-sum algorithm over a directed graph with only nominal out-degrees known.
///
/// Node j broadcasts cumulative sums sum_{t<=k} value_j[t] / d_j^+. Node i keeps
/// a mirror per nominal in-arc j -> i (indexed by arc) and a self mirror; its
/// update consumes only mirror increments.
struct RobustState {
  std::size_t k = 0;
  Vector p;
  Vector lambda;
  Vector v;
  Vector x;
  Vector y;

  // Broadcast running sums, through round k - 1.
  RunningSum sent_lambda;
  RunningSum sent_v;
  RunningSum sent_y;

  // Mirrors per nominal arc and per self pair.
  RunningSum arc_lambda;
  RunningSum arc_v;
  RunningSum arc_y;
  RunningSum self_lambda;
  RunningSum self_v;
  RunningSum self_y;

  // Mass in flight on each arc (sent but not yet absorbed). Bookkeeping for
  // invariant checks; the updates never read these.
  Vector inflight_lambda;
  Vector inflight_v;
  Vector inflight_y;
};

/// Augmented system over n real nodes followed by one virtual node per arc.
/// Virtual nodes have p = 0, load 0 and box [0, 0].
struct VirtualState {
  std::size_t k = 0;
  Vector p;
  Vector lambda;
  Vector v;
  Vector x;
  Vector y;
};

/// Overrides for the default start p[0] = proj(0), lambda[0] = 0,
/// y[0] = n_hat (p[0] - load).
struct InitialCondition {
  std::optional<Vector> p;
  std::optional<Vector> lambda;
  std::optional<Vector> y;
};

namespace detail {

inline Vector initial_power(const ProblemInstance& inst, const InitialCondition& init) {
  const auto n = static_cast<Eigen::Index>(inst.size());
  const Vector p = init.p ? *init.p : Vector::Zero(n);
  require_size(p, inst.size(), "initial power");
  return project_box(p, inst.lower, inst.upper);
}

inline Vector initial_vector(const std::optional<Vector>& given, const Vector& fallback, std::size_t n,
                             const char* what) {
  if (!given) return fallback;
  require_size(*given, n, what);
  return *given;
}

/// proj(p - s grad f(p) + s xi signal); throws on non-finite input to the projection.
inline Vector primal_update(const ProblemInstance& inst, const Vector& p, const Vector& signal, double s, double xi,
                            std::size_t k) {
  const Vector raw = p - s * cost_grad(inst.cost, p) + (s * xi) * signal;
  if (!raw.allFinite()) throw DivergenceError("primal update produced a non-finite iterate", k + 1);
  return project_box(raw, inst.lower, inst.upper);
}

/// m * z for column-stochastic m, arranged so the total is conserved up to
/// the final rounding of each entry: in each column the last nonzero row
/// receives z_j minus everything else sent, and both sides use compensated
/// sums. In the augmented matrix that row is a virtual node.
inline Vector push_mix(const Matrix& m, const Vector& z) {
  const Eigen::Index n = m.rows();
  Vector sum = Vector::Zero(n);
  Vector carry = Vector::Zero(n);
  auto two_sum_error = [](double a, double b, double t) {
    return std::abs(a) >= std::abs(b) ? (a - t) + b : (b - t) + a;
  };
  auto accumulate = [&](Eigen::Index i, double x) {
    const double t = sum[i] + x;
    carry[i] += two_sum_error(sum[i], x, t);
    sum[i] = t;
  };
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    if (z[j] == 0.0) continue;
    Eigen::Index last = n - 1;
    while (last > 0 && m(last, j) == 0.0) --last;
    double rest = z[j];
    double rest_error = 0.0;
    for (Eigen::Index i = 0; i < last; ++i) {
      if (m(i, j) == 0.0) continue;
      const double share = m(i, j) * z[j];
      const double t = rest - share;
      rest_error += two_sum_error(rest, -share, t);
      rest = t;
      accumulate(i, share);
    }
    accumulate(last, rest);
    accumulate(last, rest_error);
  }
  return sum + carry;
}

inline void require_finite(const Vector& v, const char* what, std::size_t k) {
  if (!v.allFinite()) throw DivergenceError(std::string(what) + " became non-finite", k + 1);
}

inline void require_positive_weights(const Vector& v, std::size_t k) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!(v[i] > 0.0)) {
      throw InvariantError("push-sum weight v[" + std::to_string(i) + "] = " + std::to_string(v[i]) +
                               " is not positive",
                           k + 1);
    }
  }
}

}  // namespace detail

// --- Initialization ---

inline UndirectedState init_undirected(const ProblemInstance& inst, const AlgorithmParams& params,
                                       const InitialCondition& init = {}) {
  const std::size_t n = inst.size();
  UndirectedState st;
  st.p = detail::initial_power(inst, init);
  st.lambda = detail::initial_vector(init.lambda, Vector::Zero(st.p.size()), n, "initial lambda");
  st.y = detail::initial_vector(init.y, params.n_hat * (st.p - inst.load), n, "initial y");
  return st;
}

/// Crude variant: no imbalance tracker.
inline UndirectedState init_crude(const ProblemInstance& inst, const AlgorithmParams& params,
                                  const InitialCondition& init = {}) {
  UndirectedState st = init_undirected(inst, params, init);
  st.y = Vector();
  return st;
}

/// v[0] = 1 and x[0] = lambda[0] / v[0], which is 0 for the default lambda[0] = 0.
inline DirectedState init_directed(const ProblemInstance& inst, const AlgorithmParams& params,
                                   const InitialCondition& init = {}) {
  const UndirectedState base = init_undirected(inst, params, init);
  DirectedState st;
  st.p = base.p;
  st.lambda = base.lambda;
  st.v = Vector::Ones(base.p.size());
  st.x = st.lambda.cwiseQuotient(st.v);
  st.y = base.y;
  return st;
}

inline RobustState init_robust(const ProblemInstance& inst, const NominalGraph& g, const AlgorithmParams& params,
                               const InitialCondition& init = {}) {
  if (!g.directed()) throw ConfigError("robust algorithm requires a directed graph");
  if (g.size() != inst.size()) throw DimensionError("graph node count", inst.size(), g.size());
  const DirectedState base = init_directed(inst, params, init);
  const auto n = static_cast<Eigen::Index>(inst.size());
  const auto m = static_cast<Eigen::Index>(g.edge_count());
  RobustState st;
  st.p = base.p;
  st.lambda = base.lambda;
  st.v = base.v;
  st.x = base.x;
  st.y = base.y;
  st.sent_lambda = st.sent_v = st.sent_y = RunningSum::zeros(n);
  st.self_lambda = st.self_v = st.self_y = RunningSum::zeros(n);
  st.arc_lambda = st.arc_v = st.arc_y = RunningSum::zeros(m);
  st.inflight_lambda = st.inflight_v = st.inflight_y = Vector::Zero(m);
  return st;
}

/// Real nodes as in init_directed; virtual nodes start at zero.
inline VirtualState init_virtual(const ProblemInstance& inst, const VirtualIndexMap& map,
                                 const AlgorithmParams& params, const InitialCondition& init = {}) {
  if (map.real_count() != inst.size()) throw DimensionError("virtual index map", inst.size(), map.real_count());
  const DirectedState base = init_directed(inst, params, init);
  const auto n = static_cast<Eigen::Index>(inst.size());
  const auto big_n = static_cast<Eigen::Index>(map.size());
  VirtualState st;
  st.p = st.lambda = st.v = st.x = st.y = Vector::Zero(big_n);
  st.p.head(n) = base.p;
  st.lambda.head(n) = base.lambda;
  st.v.head(n) = base.v;
  st.x.head(n) = base.x;
  st.y.head(n) = base.y;
  return st;
}

// --- Steps ---

/// Crude variant: lambda[k+1] = W lambda[k] - s n_hat (p[k] - load).
inline UndirectedState pd2_step(const UndirectedState& st, const ProblemInstance& inst, const Matrix& w,
                                const AlgorithmParams& params) {
  const double s = params.stepsize.at(st.k);
  UndirectedState next;
  next.k = st.k + 1;
  next.p = detail::primal_update(inst, st.p, st.lambda, s, params.xi, st.k);
  next.lambda = w * st.lambda - (s * params.n_hat) * (st.p - inst.load);
  detail::require_finite(next.lambda, "lambda", st.k);
  next.y = st.y;
  return next;
}

/// Gradient-tracking variant:
///   p[k+1] = proj(p - s grad f(p) + s xi lambda)
///   lambda[k+1] = W lambda - s y
///   y[k+1] = W y + n_hat (p[k+1] - p[k])
inline UndirectedState pd1_step(const UndirectedState& st, const ProblemInstance& inst, const Matrix& w,
                                const AlgorithmParams& params) {
  const double s = params.stepsize.at(st.k);
  UndirectedState next;
  next.k = st.k + 1;
  next.p = detail::primal_update(inst, st.p, st.lambda, s, params.xi, st.k);
  next.lambda = w * st.lambda - s * st.y;
  next.y = w * st.y + params.n_hat * (next.p - st.p);
  detail::require_finite(next.lambda, "lambda", st.k);
  detail::require_finite(next.y, "y", st.k);
  return next;
}

/// Push-sum variant with column-stochastic P[k]:
///   lambda[k+1] = P (lambda - s y),  v[k+1] = P v,  x = lambda ./ v,
///   y[k+1] = P y + n_hat (p[k+1] - p[k]).
inline DirectedState directed_pd_step(const DirectedState& st, const ProblemInstance& inst, const Matrix& push,
                                      const AlgorithmParams& params) {
  const double s = params.stepsize.at(st.k);
  DirectedState next;
  next.k = st.k + 1;
  next.p = detail::primal_update(inst, st.p, st.x, s, params.xi, st.k);
  next.lambda = detail::push_mix(push, st.lambda - s * st.y);
  next.v = detail::push_mix(push, st.v);
  detail::require_positive_weights(next.v, st.k);
  next.x = next.lambda.cwiseQuotient(next.v);
  next.y = detail::push_mix(push, st.y) + params.n_hat * (next.p - st.p);
  detail::require_finite(next.x, "x", st.k);
  detail::require_finite(next.y, "y", st.k);
  return next;
}

/// Running-sum variant. Mirror of arc j -> i advances as
///   (1 - gamma) mirror + gamma * (j's running sum)   if the arc delivered,
///   unchanged                                        otherwise,
/// and the self mirror gains value_i[k] / d_i^+. Node i sums the increments.
inline RobustState robust_pd_step(const RobustState& st, const ProblemInstance& inst, const NominalGraph& g,
                                  const ActiveSet& active, const AlgorithmParams& params) {
  if (active.size() != g.edge_count()) throw DimensionError("active arc set", g.edge_count(), active.size());
  const double s = params.stepsize.at(st.k);
  const double gamma = params.gamma;
  const std::size_t n = inst.size();
  const auto ni = static_cast<Eigen::Index>(n);

  RobustState next = st;
  next.k = st.k + 1;

  Vector share_lambda(ni);
  Vector share_v(ni);
  Vector share_y(ni);
  for (std::size_t j = 0; j < n; ++j) {
    const double d = static_cast<double>(g.out_degree(j));
    share_lambda[j] = st.lambda[j] / d;
    share_v[j] = st.v[j] / d;
    share_y[j] = st.y[j] / d;
  }
  for (Eigen::Index j = 0; j < ni; ++j) {
    next.sent_lambda.add(j, share_lambda[j]);
    next.sent_v.add(j, share_v[j]);
    next.sent_y.add(j, share_y[j]);
    next.self_lambda.add(j, share_lambda[j]);
    next.self_v.add(j, share_v[j]);
    next.self_y.add(j, share_y[j]);
  }

  // Self pairs.
  Vector gain_lambda = share_lambda;
  Vector gain_v = share_v;
  Vector gain_y = share_y;

  for (std::size_t e = 0; e < g.edge_count(); ++e) {
    const auto [from, to] = g.edges()[e];
    const auto j = static_cast<Eigen::Index>(from);
    const auto i = static_cast<Eigen::Index>(to);
    const auto a = static_cast<Eigen::Index>(e);
    double d_lambda = 0.0;
    double d_v = 0.0;
    double d_y = 0.0;
    if (active[e]) {
      d_lambda = gamma * next.sent_lambda.minus(j, st.arc_lambda, a);
      d_v = gamma * next.sent_v.minus(j, st.arc_v, a);
      d_y = gamma * next.sent_y.minus(j, st.arc_y, a);
      next.arc_lambda.add(a, d_lambda);
      next.arc_v.add(a, d_v);
      next.arc_y.add(a, d_y);
      gain_lambda[i] += d_lambda;
      gain_v[i] += d_v;
      gain_y[i] += d_y;
    }
    next.inflight_lambda[a] += share_lambda[j] - d_lambda;
    next.inflight_v[a] += share_v[j] - d_v;
    next.inflight_y[a] += share_y[j] - d_y;
  }

  next.p = detail::primal_update(inst, st.p, st.x, s, params.xi, st.k);
  next.lambda = gain_lambda - s * gain_y;
  next.v = gain_v;
  detail::require_positive_weights(next.v, st.k);
  next.x = next.lambda.cwiseQuotient(next.v);
  next.y = gain_y + params.n_hat * (next.p - st.p);
  detail::require_finite(next.x, "x", st.k);
  detail::require_finite(next.y, "y", st.k);
  return next;
}

/// Augmented-system step with P = augmented_push_matrix(...):
///   lambda[k+1] = P lambda - s I_real P y      (virtual lambda carries no y term)
///   v[k+1] = P v
///   y[k+1] = P y + n_hat (p[k+1] - p[k])
///   x = lambda ./ v on every node.
/// Real-node coordinates coincide with robust_pd_step.
inline VirtualState virtual_domain_step(const VirtualState& st, const ProblemInstance& inst, const NominalGraph& g,
                                        const ActiveSet& active, const AlgorithmParams& params,
                                        const VirtualIndexMap& map) {
  const Matrix push = augmented_push_matrix(g, active, params.gamma, map);
  const double s = params.stepsize.at(st.k);
  const auto n = static_cast<Eigen::Index>(inst.size());

  VirtualState next;
  next.k = st.k + 1;
  next.p = Vector::Zero(st.p.size());
  next.p.head(n) = detail::primal_update(inst, st.p.head(n), st.x.head(n), s, params.xi, st.k);

  const Vector mixed_y = detail::push_mix(push, st.y);
  next.lambda = detail::push_mix(push, st.lambda);
  next.lambda.head(n) -= s * mixed_y.head(n);
  next.v = detail::push_mix(push, st.v);
  detail::require_positive_weights(next.v, st.k);
  next.x = next.lambda.cwiseQuotient(next.v);
  next.y = mixed_y;
  next.y.head(n) += params.n_hat * (next.p.head(n) - st.p.head(n));
  detail::require_finite(next.x, "x", st.k);
  detail::require_finite(next.y, "y", st.k);
  return next;
}

/// Virtual-node coordinates of a robust state, reconstructed from the
/// running sums: in-flight value on arc j -> i is sent_j - mirror_ij.
inline Vector robust_virtual_lambda(const RobustState& st, const NominalGraph& g) {
  Vector out(static_cast<Eigen::Index>(g.edge_count()));
  for (std::size_t e = 0; e < g.edge_count(); ++e) {
    out[static_cast<Eigen::Index>(e)] =
        st.sent_lambda.minus(static_cast<Eigen::Index>(g.edges()[e].from), st.arc_lambda, static_cast<Eigen::Index>(e));
  }
  return out;
}

inline Vector robust_virtual_v(const RobustState& st, const NominalGraph& g) {
  Vector out(static_cast<Eigen::Index>(g.edge_count()));
  for (std::size_t e = 0; e < g.edge_count(); ++e) {
    out[static_cast<Eigen::Index>(e)] =
        st.sent_v.minus(static_cast<Eigen::Index>(g.edges()[e].from), st.arc_v, static_cast<Eigen::Index>(e));
  }
  return out;
}

inline Vector robust_virtual_y(const RobustState& st, const NominalGraph& g) {
  Vector out(static_cast<Eigen::Index>(g.edge_count()));
  for (std::size_t e = 0; e < g.edge_count(); ++e) {
    out[static_cast<Eigen::Index>(e)] =
        st.sent_y.minus(static_cast<Eigen::Index>(g.edges()[e].from), st.arc_y, static_cast<Eigen::Index>(e));
  }
  return out;
}

}  // namespace dersim
