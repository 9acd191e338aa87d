#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "support.hpp"

using namespace dersim;
using namespace testing_support;

TEST(Rng, CounterBasedDrawsArePure) {
  EXPECT_EQ(rng::draw(7, rng::Stream::link_failure, 3, 11), rng::draw(7, rng::Stream::link_failure, 3, 11));
  EXPECT_NE(rng::draw(7, rng::Stream::link_failure, 3, 11), rng::draw(7, rng::Stream::link_failure, 3, 12));
  EXPECT_NE(rng::draw(7, rng::Stream::link_failure, 3, 11), rng::draw(7, rng::Stream::instance, 3, 11));
  EXPECT_NE(rng::draw(7, rng::Stream::link_failure, 3, 11), rng::draw(8, rng::Stream::link_failure, 3, 11));
  // Known splitmix64 output for state 0.
  EXPECT_EQ(rng::splitmix64(0), 0xe220a8397b1dcdafULL);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng::to_unit(rng::draw(1, rng::Stream::graph, 0, static_cast<std::uint64_t>(i)));
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}

TEST(Graph, ValidatesStructure) {
  EXPECT_THROW(NominalGraph(3, {{0, 1}, {1, 1}}, GraphMode::undirected), InvalidInstanceError);
  EXPECT_THROW(NominalGraph(3, {{0, 1}, {1, 0}, {1, 2}}, GraphMode::undirected), InvalidInstanceError);
  EXPECT_THROW(NominalGraph(3, {{0, 1}, {1, 3}}, GraphMode::undirected), InvalidInstanceError);
  EXPECT_THROW(NominalGraph(3, {{0, 1}}, GraphMode::undirected), InvalidInstanceError);
  EXPECT_THROW(NominalGraph(3, {{0, 1}, {1, 2}}, GraphMode::directed), InvalidInstanceError);
  EXPECT_NO_THROW(NominalGraph(3, {{0, 1}, {1, 2}, {2, 0}}, GraphMode::directed));
  EXPECT_NO_THROW(NominalGraph(3, {{0, 1}, {1, 0}, {1, 2}, {2, 1}}, GraphMode::directed));
}

TEST(Graph, Ieee39TopologyIsConnectedBothWays) {
  const auto g = ieee39_undirected();
  EXPECT_EQ(g.edge_count(), 46u);
  const auto d = ieee39_directed();
  EXPECT_TRUE(is_connected(39, d.edges(), GraphMode::directed));
  EXPECT_LT(d.edge_count(), 92u);
  EXPECT_GE(d.edge_count(), 46u);
}

TEST(Schedule, FailureFrequencyMatchesProbability) {
  const auto g = ieee39_undirected();
  const double q = 0.2;
  const GraphSchedule schedule(g, q, 5, 2000);
  std::size_t down = 0;
  std::size_t total = 0;
  for (std::size_t k = 0; k < schedule.horizon; ++k) {
    for (const bool a : schedule.sample_active(k)) {
      down += a ? 0 : 1;
      ++total;
    }
  }
  // Binomial(92000, 0.2): sd ~ 121; allow 5 sd.
  const double expected = q * static_cast<double>(total);
  const double sd = std::sqrt(expected * (1 - q));
  EXPECT_NEAR(static_cast<double>(down), expected, 5 * sd);
}

TEST(Schedule, DeterministicAndDigested) {
  const auto g = ieee39_directed();
  const GraphSchedule a(g, 0.3, 9, 100);
  const GraphSchedule b(g, 0.3, 9, 100);
  const GraphSchedule c(g, 0.3, 10, 100);
  for (std::size_t k = 0; k < 100; k += 7) EXPECT_EQ(a.sample_active(k), b.sample_active(k));
  EXPECT_EQ(a.digest(), b.digest());
  EXPECT_NE(a.digest(), c.digest());
  EXPECT_THROW(a.sample_active(100), ConfigError);
  EXPECT_THROW(GraphSchedule(g, 1.0, 1, 10), ConfigError);
  const GraphSchedule none(g, 0.0, 1, 10);
  for (const bool x : none.sample_active(3)) EXPECT_TRUE(x);
}

TEST(Schedule, BConnectivity) {
  const NominalGraph ring(4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}}, GraphMode::directed);
  const GraphSchedule always(ring, 0.0, 1, 12);
  const auto v = check_B_connectivity(always, 3);
  EXPECT_EQ(v.size(), 4u);
  for (const bool ok : v) EXPECT_TRUE(ok);
  const GraphSchedule broken(ring, 0.0, 1, 12, {2});
  for (const bool ok : check_B_connectivity(broken, 4)) EXPECT_FALSE(ok);
  EXPECT_FALSE(smallest_connectivity_window(broken, 12).has_value());
  const GraphSchedule lossy(ring, 0.5, 3, 400);
  const auto b = smallest_connectivity_window(lossy, 40);
  ASSERT_TRUE(b.has_value());
  EXPECT_GT(*b, 1u);
}

TEST(Metropolis, HandComputedWeights) {
  // Path 0 - 1 - 2: degrees (2, 3, 2).
  const NominalGraph path(3, {{0, 1}, {1, 2}}, GraphMode::undirected);
  const Matrix w = metropolis_weights(path, {true, true});
  Matrix expected(3, 3);
  expected << 2.0 / 3, 1.0 / 3, 0, 1.0 / 3, 1.0 / 3, 1.0 / 3, 0, 1.0 / 3, 2.0 / 3;
  EXPECT_LT((w - expected).cwiseAbs().maxCoeff(), 1e-15);
  const Matrix w2 = metropolis_weights(path, {false, true});
  EXPECT_DOUBLE_EQ(w2(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(w2(1, 1), 2.0 / 3);
}

TEST(PushMatrix, UsesActiveOutDegree) {
  const NominalGraph g(3, {{0, 1}, {0, 2}, {1, 0}, {2, 0}}, GraphMode::directed);
  const Matrix p = push_matrix(g, {true, false, true, true});
  EXPECT_DOUBLE_EQ(p(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(p(1, 0), 0.5);
  EXPECT_DOUBLE_EQ(p(2, 0), 0.0);
  EXPECT_LT(column_stochasticity_defect(p), 1e-15);
}

TEST(AugmentedMatrix, HandComputedEntries) {
  const NominalGraph g(2, {{0, 1}, {1, 0}}, GraphMode::directed);
  const VirtualIndexMap map(g);
  EXPECT_EQ(map.size(), 4u);
  EXPECT_EQ(map.virtual_of(0, 1), 2u);
  EXPECT_EQ(map.arc_of(3), (Edge{1, 0}));
  EXPECT_THROW(map.arc_of(1), InvalidInstanceError);
  const double gamma = 0.9;
  const Matrix p = augmented_push_matrix(g, {true, false}, gamma, map);
  // Arc 0 -> 1 active through virtual node 2; arc 1 -> 0 lost into virtual node 3.
  EXPECT_DOUBLE_EQ(p(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(p(1, 0), gamma * 0.5);
  EXPECT_DOUBLE_EQ(p(2, 0), (1 - gamma) * 0.5);
  EXPECT_DOUBLE_EQ(p(1, 2), gamma);
  EXPECT_DOUBLE_EQ(p(2, 2), 1 - gamma);
  EXPECT_DOUBLE_EQ(p(3, 1), 0.5);
  EXPECT_DOUBLE_EQ(p(3, 3), 1.0);
  EXPECT_DOUBLE_EQ(p(0, 1), 0.0);
  EXPECT_LT(column_stochasticity_defect(p), 1e-15);
}

TEST(MatrixProperties, RandomizedChecks) {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const auto gu = random_graph(12, 0.2, GraphMode::undirected, seed);
    const auto gd = random_graph(12, 0.2, GraphMode::directed, seed);
    const VirtualIndexMap map(gd);
    const GraphSchedule su(gu, 0.4, seed, 20);
    const GraphSchedule sd(gd, 0.4, seed, 20);
    const double gamma = 0.3 + 0.02 * static_cast<double>(seed);
    const double tau = std::min(gamma, 1 - gamma) / 12.0;
    for (std::size_t k = 0; k < 20; ++k) {
      const Matrix w = metropolis_weights(gu, su.sample_active(k));
      EXPECT_LT((w - w.transpose()).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_LT((w.rowwise().sum().array() - 1).abs().maxCoeff(), 1e-12);
      EXPECT_GE(w.minCoeff(), 0.0);
      EXPECT_LT(column_stochasticity_defect(push_matrix(gd, sd.sample_active(k))), 1e-12);
      const Matrix pt = augmented_push_matrix(gd, sd.sample_active(k), gamma, map);
      EXPECT_LT(column_stochasticity_defect(pt), 1e-12);
      for (Eigen::Index i = 0; i < pt.rows(); ++i) {
        for (Eigen::Index j = 0; j < pt.cols(); ++j) {
          if (pt(i, j) != 0.0) EXPECT_GE(pt(i, j), tau - 1e-12);
        }
      }
    }
  }
}

TEST(GraphText, RoundTrip) {
  const auto g = ieee39_directed();
  std::stringstream s;
  write_graph(s, g);
  const auto back = read_graph(s);
  EXPECT_EQ(back.size(), g.size());
  EXPECT_EQ(back.edges(), g.edges());
  EXPECT_TRUE(back.directed());
}

TEST(GraphText, ErrorsCarryLineAndColumn) {
  std::istringstream bad_mode("3 2 sideways\n0 1\n1 2\n");
  try {
    read_graph(bad_mode);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1u);
    EXPECT_EQ(e.column(), 5u);
  }
  std::istringstream bad_edge("# comment\n3 2 undirected\n0 1\n1 x\n");
  try {
    read_graph(bad_edge);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4u);
    EXPECT_EQ(e.column(), 3u);
  }
  std::istringstream short_list("3 2 undirected\n0 1\n");
  EXPECT_THROW(read_graph(short_list), ParseError);
}
