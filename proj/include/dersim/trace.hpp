#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "dersim/problem.hpp"

namespace dersim {

inline constexpr double kNotApplicable = std::numeric_limits<double>::quiet_NaN();

/// One synchronous round. Vectors that an algorithm does not carry stay empty.
struct StepRecord {
  std::size_t k = 0;
  Vector p;
  Vector lambda;
  Vector x;
  Vector y;
  Vector v;
  // Mass held by virtual nodes (packets in flight); zero outside the robust family.
  double y_virtual = 0.0;
  double v_virtual = 0.0;
  double v_virtual_min = kNotApplicable;

  double err_p = kNotApplicable;
  double consensus_spread = kNotApplicable;
  double conservation_residual = kNotApplicable;
  double mass_residual = kNotApplicable;
  double min_v = kNotApplicable;
  // Column-sum defect of the mixing matrix that produced this record.
  double stochasticity_residual = 0.0;

  /// Multiplier estimates the primal step consumes: x where it exists, else lambda.
  const Vector& consensus() const { return x.size() > 0 ? x : lambda; }
};

struct TraceMetadata {
  std::string algorithm;
  AlgorithmParams params;
  std::uint64_t seed = 0;
  double failure_probability = 0.0;
  std::uint64_t schedule_digest = 0;
  std::size_t n = 0;
  Vector load;
};

struct RunTrace {
  TraceMetadata meta;
  std::vector<StepRecord> records;
  std::vector<std::string> warnings;
};

/// |1'y + y_virtual - n_hat 1'(p - load)|; NaN when the record has no y.
inline double conservation_residual(const StepRecord& r, const Vector& load, double n_hat) {
  if (r.y.size() == 0) return kNotApplicable;
  return std::abs(r.y.sum() + r.y_virtual - n_hat * (r.p - load).sum());
}

/// |1'v + v_virtual - n|; NaN when the record has no v.
inline double mass_residual(const StepRecord& r) {
  if (r.v.size() == 0) return kNotApplicable;
  return std::abs(r.v.sum() + r.v_virtual - static_cast<double>(r.v.size()));
}

inline double spread(const Vector& values) {
  if (values.size() == 0) return kNotApplicable;
  return values.maxCoeff() - values.minCoeff();
}

}  // namespace dersim
