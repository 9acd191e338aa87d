#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "dersim/algorithms.hpp"
#include "dersim/errors.hpp"
#include "dersim/network.hpp"
#include "dersim/oracle.hpp"
#include "dersim/trace.hpp"

namespace dersim {

enum class Algorithm { centralized, pd1, pd2, directed, robust, virtual_domain };

inline std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::centralized: return "centralized";
    case Algorithm::pd1: return "pd1";
    case Algorithm::pd2: return "pd2";
    case Algorithm::directed: return "directed";
    case Algorithm::robust: return "robust";
    case Algorithm::virtual_domain: return "virtual";
  }
  return "unknown";
}

inline Algorithm parse_algorithm(std::string_view name) {
  for (const auto a : {Algorithm::centralized, Algorithm::pd1, Algorithm::pd2, Algorithm::directed, Algorithm::robust,
                       Algorithm::virtual_domain}) {
    if (to_string(a) == name) return a;
  }
  throw ConfigError("unknown algorithm '" + std::string(name) +
                    "' (expected centralized, pd1, pd2, directed, robust or virtual)");
}

inline bool needs_directed_graph(Algorithm a) {
  return a == Algorithm::directed || a == Algorithm::robust || a == Algorithm::virtual_domain;
}

struct RunOptions {
  /// Reference optimum for err_p; computed by bisection when absent.
  std::optional<DispatchSolution> solution;
  /// B for the windowed connectivity check; 0 skips it.
  std::size_t connectivity_window = 0;
};

namespace detail {

inline double symmetric_stochastic_defect(const Matrix& w) {
  const double rows = (w.rowwise().sum().array() - 1.0).abs().maxCoeff();
  const double cols = (w.colwise().sum().array() - 1.0).abs().maxCoeff();
  const double asym = (w - w.transpose()).cwiseAbs().maxCoeff();
  return std::max({rows, cols, asym});
}

inline void finish_record(StepRecord& r, const ProblemInstance& inst, const AlgorithmParams& params,
                          const DispatchSolution& sol) {
  r.err_p = (r.p - sol.p_star).norm();
  r.consensus_spread = spread(r.consensus());
  r.conservation_residual = conservation_residual(r, inst.load, params.n_hat);
  r.mass_residual = mass_residual(r);
  if (r.v.size() > 0) r.min_v = r.v.minCoeff();
}

}  // namespace detail

/// Drives one algorithm for params.horizon rounds over the schedule's sampled
/// graphs. Deterministic per (instance, schedule, params, init).
inline RunTrace run(Algorithm algorithm, const ProblemInstance& inst, const GraphSchedule& schedule,
                    const AlgorithmParams& params, const InitialCondition& init = {}, const RunOptions& options = {}) {
  validate(inst);
  const std::size_t n = inst.size();
  const auto& g = schedule.nominal;
  if (algorithm != Algorithm::centralized) {
    if (g.size() != n) throw ConfigError("graph has " + std::to_string(g.size()) + " nodes, instance has " + std::to_string(n));
    if (needs_directed_graph(algorithm) != g.directed()) {
      throw ConfigError(std::string(to_string(algorithm)) + " needs a " +
                        (needs_directed_graph(algorithm) ? "directed" : "undirected") + " graph");
    }
    if (params.horizon > schedule.horizon) {
      throw ConfigError("run horizon " + std::to_string(params.horizon) + " exceeds schedule horizon " +
                        std::to_string(schedule.horizon));
    }
  }
  std::vector<std::string> warnings = check_params(params, n);
  const DispatchSolution sol = options.solution ? *options.solution : solve_bisection(inst, params.xi, params.n_hat);

  RunTrace trace;
  if (algorithm == Algorithm::centralized) {
    const Vector p0 = detail::initial_power(inst, init);
    const double lambda0 = init.lambda ? init.lambda->mean() : 0.0;
    trace = centralized_pd_run(inst, params, p0, lambda0, &sol);
    trace.warnings.insert(trace.warnings.begin(), warnings.begin(), warnings.end());
    warnings.clear();
  }
  trace.meta.algorithm = std::string(to_string(algorithm));
  trace.meta.params = params;
  trace.meta.seed = schedule.seed;
  trace.meta.failure_probability = schedule.failure_probability;
  trace.meta.schedule_digest = schedule.digest();
  trace.meta.n = n;
  trace.meta.load = inst.load;
  if (algorithm == Algorithm::centralized) return trace;
  trace.warnings = std::move(warnings);

  if (options.connectivity_window > 0) {
    const auto verdicts = check_B_connectivity(schedule, options.connectivity_window);
    const auto failed = std::count(verdicts.begin(), verdicts.end(), false);
    if (failed > 0) {
      trace.warnings.push_back(std::to_string(failed) + " of " + std::to_string(verdicts.size()) + " windows of length " +
                               std::to_string(options.connectivity_window) + " are not " +
                               (g.directed() ? "strongly connected" : "connected"));
    }
  }

  const std::size_t K = params.horizon;
  trace.records.reserve(K + 1);

  switch (algorithm) {
    case Algorithm::pd1:
    case Algorithm::pd2: {
      const bool crude = algorithm == Algorithm::pd2;
      UndirectedState st = crude ? init_crude(inst, params, init) : init_undirected(inst, params, init);
      auto record = [&](double defect) {
        StepRecord r;
        r.k = st.k;
        r.p = st.p;
        r.lambda = st.lambda;
        r.y = st.y;
        r.stochasticity_residual = defect;
        detail::finish_record(r, inst, params, sol);
        trace.records.push_back(std::move(r));
      };
      record(0.0);
      for (std::size_t k = 0; k < K; ++k) {
        const Matrix w = metropolis_weights(g, schedule.sample_active(k));
        st = crude ? pd2_step(st, inst, w, params) : pd1_step(st, inst, w, params);
        record(detail::symmetric_stochastic_defect(w));
      }
      break;
    }
    case Algorithm::directed: {
      DirectedState st = init_directed(inst, params, init);
      auto record = [&](double defect) {
        StepRecord r;
        r.k = st.k;
        r.p = st.p;
        r.lambda = st.lambda;
        r.x = st.x;
        r.y = st.y;
        r.v = st.v;
        r.stochasticity_residual = defect;
        detail::finish_record(r, inst, params, sol);
        trace.records.push_back(std::move(r));
      };
      record(0.0);
      for (std::size_t k = 0; k < K; ++k) {
        const Matrix push = push_matrix(g, schedule.sample_active(k));
        st = directed_pd_step(st, inst, push, params);
        record(column_stochasticity_defect(push));
      }
      break;
    }
    case Algorithm::robust: {
      RobustState st = init_robust(inst, g, params, init);
      auto record = [&]() {
        StepRecord r;
        r.k = st.k;
        r.p = st.p;
        r.lambda = st.lambda;
        r.x = st.x;
        r.y = st.y;
        r.v = st.v;
        r.y_virtual = st.inflight_y.sum();
        r.v_virtual = st.inflight_v.sum();
        if (st.k > 0 && st.inflight_v.size() > 0) r.v_virtual_min = st.inflight_v.minCoeff();
        detail::finish_record(r, inst, params, sol);
        trace.records.push_back(std::move(r));
      };
      record();
      for (std::size_t k = 0; k < K; ++k) {
        st = robust_pd_step(st, inst, g, schedule.sample_active(k), params);
        record();
      }
      break;
    }
    case Algorithm::virtual_domain: {
      const VirtualIndexMap map(g);
      VirtualState st = init_virtual(inst, map, params, init);
      const auto ni = static_cast<Eigen::Index>(n);
      const auto virtual_count = static_cast<Eigen::Index>(map.size()) - ni;
      auto record = [&](double defect) {
        StepRecord r;
        r.k = st.k;
        r.p = st.p.head(ni);
        r.lambda = st.lambda.head(ni);
        r.x = st.x.head(ni);
        r.y = st.y.head(ni);
        r.v = st.v.head(ni);
        r.y_virtual = st.y.tail(virtual_count).sum();
        r.v_virtual = st.v.tail(virtual_count).sum();
        if (st.k > 0 && virtual_count > 0) r.v_virtual_min = st.v.tail(virtual_count).minCoeff();
        r.stochasticity_residual = defect;
        detail::finish_record(r, inst, params, sol);
        trace.records.push_back(std::move(r));
      };
      record(0.0);
      for (std::size_t k = 0; k < K; ++k) {
        const ActiveSet active = schedule.sample_active(k);
        st = virtual_domain_step(st, inst, g, active, params, map);
        record(column_stochasticity_defect(augmented_push_matrix(g, active, params.gamma, map)));
      }
      break;
    }
    case Algorithm::centralized:
      break;
  }
  return trace;
}

}  // namespace dersim
