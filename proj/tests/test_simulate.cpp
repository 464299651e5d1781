#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "zinbsf/core/distributions.hpp"
#include "zinbsf/simulate/simulate.hpp"

using namespace zinbsf;

namespace {

SimulationScenario flat_scenario(double b1, double b2, double theta, std::uint64_t seed) {
  SimulationScenario sc;
  sc.rows = 50;
  sc.cols = 50;
  sc.n_years = 4;
  sc.n_covariates = 0;
  sc.beta1 = Eigen::VectorXd::Constant(1, b1);
  sc.beta2 = Eigen::VectorXd::Constant(1, b2);
  sc.theta = theta;
  sc.seed = seed;
  return sc;
}

} // namespace

TEST(Lattice, SmallShapes) {
  const AdjacencyGraph a = lattice_graph(1, 2);
  EXPECT_EQ(a.n_counties(), 2u);
  EXPECT_EQ(a.n_edges(), 1u);
  const AdjacencyGraph b = lattice_graph(3, 3);
  EXPECT_EQ(b.n_counties(), 9u);
  EXPECT_EQ(b.n_edges(), 12u);
  EXPECT_THROW(lattice_graph(0, 3), InputError);
}

TEST(Lattice, DegreeHistogramMatchesRecount) {
  // corners have degree 2, other border nodes 3, interior 4
  const int rows = 10, cols = 10;
  std::map<int, int> expected;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const int deg = (r > 0) + (r + 1 < rows) + (c > 0) + (c + 1 < cols);
      ++expected[deg];
    }
  std::map<int, int> got;
  for (int d : lattice_graph(rows, cols).degrees()) ++got[d];
  EXPECT_EQ(got, expected);
  EXPECT_EQ(got, (std::map<int, int>{{2, 4}, {3, 32}, {4, 64}}));
}

TEST(Lattice, IdsSortLikeIndices) {
  const AdjacencyGraph g = lattice_graph(4, 5);
  EXPECT_TRUE(std::is_sorted(g.county_ids.begin(), g.county_ids.end()));
  EXPECT_EQ(g.county_ids.front(), "C00");
}

TEST(Design, StandardizedAndSeeded) {
  const Eigen::MatrixXd x = make_design(5, 4, 3, 9);
  ASSERT_EQ(x.rows(), 20);
  ASSERT_EQ(x.cols(), 4);
  EXPECT_TRUE((x.col(0).array() == 1.0).all());
  for (Eigen::Index j = 1; j < 4; ++j) {
    EXPECT_NEAR(x.col(j).mean(), 0.0, 1e-12);
    EXPECT_NEAR(std::sqrt((x.col(j).array() - x.col(j).mean()).square().sum() / 19.0), 1.0, 1e-12);
  }
  EXPECT_EQ(x, make_design(5, 4, 3, 9));
  EXPECT_NE(x, make_design(5, 4, 3, 10));
}

TEST(Simulate, NoDetectionGivesAllZeros) {
  const SimulatedData s = simulate_dataset(flat_scenario(-10.0, 1.0, 1.0, 1));
  for (auto y : s.dataset.y) EXPECT_EQ(y, 0);
}

TEST(Simulate, FullDetectionMeanMatches) {
  const SimulatedData s = simulate_dataset(flat_scenario(10.0, std::log(4.0), 1e6, 2));
  const auto n = static_cast<double>(s.dataset.n_units());
  ASSERT_EQ(s.dataset.n_units(), 10000u);
  double sum = 0.0;
  for (auto y : s.dataset.y) sum += static_cast<double>(y);
  // nearly Poisson(4): sd of the mean is sqrt(4 / n)
  EXPECT_NEAR(sum / n, 4.0, 3.0 * std::sqrt(4.0 / n));
}

TEST(Simulate, ZeroFractionMatchesAnalyticProbability) {
  SimulationScenario sc;
  sc.rows = 50;
  sc.cols = 50;
  sc.n_years = 4;
  sc.seed = 3;
  const SimulatedData s = simulate_dataset(sc);
  const auto& t = s.truth;
  double expected = 0.0, var = 0.0, zeros = 0.0;
  for (std::size_t i = 0; i < s.dataset.n_units(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    const double p0 = (1.0 - t.pi[k]) + t.pi[k] * std::exp(nb_logpmf(0, t.mu[k], sc.theta));
    expected += p0;
    var += p0 * (1.0 - p0);
    zeros += s.dataset.y[i] == 0;
  }
  const double n = static_cast<double>(s.dataset.n_units());
  EXPECT_NEAR(zeros / n, expected / n, 3.0 * std::sqrt(var) / n);
}

TEST(Simulate, DetectedUnitsMeanAndOverdispersion) {
  SimulationScenario sc = flat_scenario(10.0, std::log(5.0), 0.5, 4);
  const SimulatedData s = simulate_dataset(sc);
  double sum = 0.0, sq = 0.0, n = 0.0;
  for (std::size_t i = 0; i < s.dataset.n_units(); ++i) {
    if (!s.truth.params.z[i]) continue;
    const double y = static_cast<double>(s.dataset.y[i]);
    sum += y;
    sq += y * y;
    n += 1.0;
  }
  const double mean = sum / n;
  const double var = (sq - n * mean * mean) / (n - 1.0);
  EXPECT_NEAR(mean, 5.0, 3.0 * std::sqrt(var / n));
  EXPECT_GT(var, 2.0 * mean);
  // NB variance mu + mu^2 / theta = 55
  EXPECT_NEAR(var / 55.0, 1.0, 0.15);
}

TEST(Simulate, DefaultZeroFractionInTargetBand) {
  for (std::uint64_t seed : {1, 2, 3}) {
    SimulationScenario sc;
    sc.seed = seed;
    const SimulatedData s = simulate_dataset(sc);
    double zeros = 0.0;
    for (auto y : s.dataset.y) zeros += y == 0;
    const double frac = zeros / static_cast<double>(s.dataset.n_units());
    EXPECT_GE(frac, 0.6) << seed;
    EXPECT_LE(frac, 0.75) << seed;
  }
}

TEST(Simulate, MoranFieldPositivelyAutocorrelated) {
  int positive = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto s = fixtures::small(10, 10, 1, 1, seed, SpatialMode::moran, 1.0);
    positive += morans_i(s.truth.graph, s.truth.w) > 0.0;
  }
  EXPECT_GE(positive, 19);
}

TEST(Simulate, TruthIsConsistent) {
  const auto s = fixtures::small(6, 7, 3, 2, 5, SpatialMode::moran, 0.8);
  const Dataset& d = s.dataset;
  EXPECT_NO_THROW(validate(d));
  ASSERT_TRUE(s.truth.basis.has_value());
  const Eigen::VectorXd w = s.truth.basis->vectors * s.truth.params.delta;
  EXPECT_LT((w - s.truth.w).cwiseAbs().maxCoeff(), 1e-12);
  for (std::size_t i = 0; i < d.n_units(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    if (!s.truth.params.z[i]) { EXPECT_EQ(d.y[i], 0); }
    EXPECT_NEAR(std::log(s.truth.mu[k]), d.design.row(k).dot(s.truth.params.beta2) + w[d.county_index[i]], 1e-12);
    EXPECT_GT(d.population[i], 0.0);
    EXPECT_EQ(d.county_index[i], static_cast<int>(i / 3));
  }
}

TEST(Simulate, SeedChangesCountsNotShape) {
  const auto a = fixtures::small(8, 8, 2, 3, 1);
  const auto b = fixtures::small(8, 8, 2, 3, 2);
  EXPECT_EQ(a.dataset.design.rows(), b.dataset.design.rows());
  EXPECT_EQ(a.dataset.design.cols(), b.dataset.design.cols());
  EXPECT_NE(a.dataset.y, b.dataset.y);
  EXPECT_EQ(a.dataset.y, fixtures::small(8, 8, 2, 3, 1).dataset.y);
}

TEST(Simulate, SuppliedEdgeList) {
  SimulationScenario sc;
  sc.edges = std::vector<EdgeRecord>{{"x", "y", 1}, {"y", "z", 2}, {"z", "w", 3}};
  sc.n_covariates = 1;
  sc.n_years = 3;
  const SimulatedData s = simulate_dataset(sc);
  EXPECT_EQ(s.dataset.county_ids, (std::vector<std::string>{"w", "x", "y", "z"}));
  EXPECT_EQ(s.dataset.n_units(), 12u);
}

TEST(Simulate, InvalidScenarios) {
  SimulationScenario sc;
  sc.theta = 0.0;
  EXPECT_THROW(simulate_dataset(sc), InputError);
  sc = SimulationScenario{};
  sc.beta1 = Eigen::VectorXd::Zero(2);
  EXPECT_THROW(simulate_dataset(sc), InputError);
  sc = SimulationScenario{};
  sc.population_min = -1.0;
  EXPECT_THROW(simulate_dataset(sc), InputError);
}
