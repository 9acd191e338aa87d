#pragma once

#include <cstdint>
#include <vector>

#include "dersim/experiment.hpp"

namespace testing_support {

using dersim::Vector;

inline Vector vec(std::initializer_list<double> values) {
  Vector v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (const double x : values) v[i++] = x;
  return v;
}

inline dersim::ProblemInstance quadratic_instance(const Vector& a, const Vector& load, const Vector& lo,
                                                  const Vector& hi) {
  return {load, lo, hi, dersim::CostModel::pure_quadratic(a)};
}

/// f = a p^2 with a = (1, 2, 4), total load 3 and loose boxes: p* = (12, 6, 3)/7.
inline dersim::ProblemInstance waterfilling_instance() {
  return quadratic_instance(vec({1, 2, 4}), vec({1, 1, 1}), vec({0, 0, 0}), vec({10, 10, 10}));
}

inline dersim::ProblemInstance random_instance(std::size_t n, std::uint64_t seed) {
  dersim::InstanceSpec spec;
  spec.n = n;
  return dersim::generate_instance(spec, seed).instance;
}

inline dersim::NominalGraph ieee39_undirected() {
  return {39, dersim::ieee39_lines(), dersim::GraphMode::undirected};
}

inline dersim::NominalGraph ieee39_directed() {
  return {39, dersim::orient_strongly_connected(39, dersim::ieee39_lines()), dersim::GraphMode::directed};
}

inline double max_abs_diff(const Vector& a, const Vector& b) {
  if (a.size() == 0 && b.size() == 0) return 0.0;
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace testing_support
