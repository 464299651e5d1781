#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <boost/random/gamma_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>
#include <Eigen/Dense>

#include "zinbsf/core/model.hpp"
#include "zinbsf/errors.hpp"
#include "zinbsf/rng.hpp"
#include "zinbsf/spatial/graph.hpp"
#include "zinbsf/spatial/moran_basis.hpp"

namespace zinbsf {

namespace detail {

inline std::string padded_id(const std::string& prefix, std::size_t i, std::size_t n) {
  const std::size_t width = std::to_string(n > 0 ? n - 1 : 0).size();
  std::string digits = std::to_string(i);
  if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
  return prefix + digits;
}

} // namespace detail

/// rows x cols grid with 4-neighbor adjacency. Node (r, c) has index
/// r * cols + c and id "C<index>" zero padded so ids sort like indices.
inline AdjacencyGraph lattice_graph(int rows, int cols) {
  if (rows < 1 || cols < 1) throw InputError("lattice dimensions must be at least 1");
  const auto n = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = detail::padded_id("C", i, n);
  std::vector<std::pair<int, int>> pairs;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const int i = r * cols + c;
      if (c + 1 < cols) pairs.emplace_back(i, i + 1);
      if (r + 1 < rows) pairs.emplace_back(i, i + cols);
    }
  return graph_from_index_pairs(std::move(ids), pairs);
}

/// Intercept plus standard-normal covariates, centred and standardized.
/// Row county * n_years + year (county-major).
inline Eigen::MatrixXd make_design(int n_counties, int n_years, int n_covariates, std::uint64_t seed) {
  if (n_counties < 1 || n_years < 1 || n_covariates < 0) throw InputError("design dimensions must be positive");
  const Eigen::Index n = static_cast<Eigen::Index>(n_counties) * n_years;
  if (n_covariates > 0 && n < 2) throw InputError("need at least two rows to standardize covariates");
  Eigen::MatrixXd x(n, n_covariates + 1);
  x.col(0).setOnes();
  CounterRng rng = CounterRng::stream(seed, 0xde5167ULL);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 1; j <= n_covariates; ++j) x(i, j) = rng.normal();
  std::vector<std::string> names(static_cast<std::size_t>(n_covariates) + 1, "x");
  standardize_columns(x, names);
  return x;
}

inline std::vector<std::string> default_covariate_names(int n_covariates) {
  std::vector<std::string> names{"intercept"};
  for (int j = 1; j <= n_covariates; ++j) names.push_back("x" + std::to_string(j));
  return names;
}

enum class SpatialMode { none, moran };

struct SimulationScenario {
  int rows = 20;
  int cols = 25;
  /// When set, replaces the lattice; counties are the ids named here.
  std::optional<std::vector<EdgeRecord>> edges;
  int n_years = 4;
  int n_covariates = 5;
  int first_year = 2012;
  /// Length n_covariates + 1 each; empty selects the defaults below.
  Eigen::VectorXd beta1;
  Eigen::VectorXd beta2;
  double theta = 1.5;
  SpatialMode spatial_mode = SpatialMode::none;
  int q = 0; // 0: default_basis_rank
  double sigma_w = 0.0;
  double population_min = 500.0;
  double population_max = 20000.0;
  std::uint64_t seed = 1;
};

/// Coefficients giving a zero fraction near 0.65 for five standard-normal
/// covariates; other covariate counts cycle the same slopes.
inline Eigen::VectorXd default_beta1(int n_covariates) {
  const double slopes[] = {0.6, -0.4, 0.3, 0.0, 0.2};
  Eigen::VectorXd b(n_covariates + 1);
  b[0] = -0.3;
  for (int j = 1; j <= n_covariates; ++j) b[j] = slopes[(j - 1) % 5];
  return b;
}

inline Eigen::VectorXd default_beta2(int n_covariates) {
  const double slopes[] = {0.5, -0.3, 0.0, 0.25, -0.2};
  Eigen::VectorXd b(n_covariates + 1);
  b[0] = 1.0;
  for (int j = 1; j <= n_covariates; ++j) b[j] = slopes[(j - 1) % 5];
  return b;
}

inline void validate(const SimulationScenario& s) {
  if (s.n_years < 1 || s.n_covariates < 0) throw InputError("scenario: n_years and n_covariates must be positive");
  if (!s.edges && (s.rows < 1 || s.cols < 1)) throw InputError("scenario: lattice dimensions must be at least 1");
  const Eigen::Index p = s.n_covariates + 1;
  if ((s.beta1.size() != 0 && s.beta1.size() != p) || (s.beta2.size() != 0 && s.beta2.size() != p))
    throw InputError("scenario: beta vectors need n_covariates + 1 entries");
  if (!(s.theta > 0.0)) throw InputError("scenario: theta must be positive");
  if (s.spatial_mode == SpatialMode::moran && !(s.sigma_w >= 0.0)) throw InputError("scenario: sigma_w must be >= 0");
  if (!(s.population_min > 0.0) || s.population_max < s.population_min)
    throw InputError("scenario: population range must be positive and ordered");
}

struct SimulationTruth {
  ParameterState params;
  /// Per-county spatial effect (zeros without spatial effects).
  Eigen::VectorXd w;
  Eigen::VectorXd pi;
  Eigen::VectorXd mu;
  AdjacencyGraph graph;
  std::optional<MoranBasis> basis;
};

struct SimulatedData {
  Dataset dataset;
  SimulationTruth truth;
};

/// Draw from NB(mean mu, dispersion theta) as a gamma-Poisson mixture.
template <typename Rng>
std::int64_t draw_negative_binomial(Rng& rng, double mu, double theta) {
  const double lambda = boost::random::gamma_distribution<double>(theta, mu / theta)(rng);
  if (!(lambda > 0.0)) return 0;
  return boost::random::poisson_distribution<std::int64_t, double>(lambda)(rng);
}

/// W from the Moran basis (or zero), pi and mu from the linear predictors,
/// z ~ Bernoulli(pi), and y = 0 when z = 0, else y ~ NB(mu, theta).
inline SimulatedData simulate_dataset(const SimulationScenario& sc) {
  validate(sc);
  SimulatedData out;
  SimulationTruth& truth = out.truth;
  if (sc.edges) {
    std::vector<std::string> ids;
    for (const auto& e : *sc.edges) {
      ids.push_back(e.a);
      ids.push_back(e.b);
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    truth.graph = build_graph(*sc.edges, std::move(ids));
  } else {
    truth.graph = lattice_graph(sc.rows, sc.cols);
  }
  const auto n_counties = static_cast<int>(truth.graph.n_counties());

  Dataset& d = out.dataset;
  d.county_ids = truth.graph.county_ids;
  for (int t = 0; t < sc.n_years; ++t) d.years.push_back(sc.first_year + t);
  d.covariate_names = default_covariate_names(sc.n_covariates);
  d.design = make_design(n_counties, sc.n_years, sc.n_covariates, derive_seed(sc.seed, 1));
  const auto n = static_cast<std::size_t>(d.design.rows());
  d.county_index.resize(n);
  d.year_index.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    d.county_index[i] = static_cast<int>(i / static_cast<std::size_t>(sc.n_years));
    d.year_index[i] = static_cast<int>(i % static_cast<std::size_t>(sc.n_years));
  }

  ParameterState& p = truth.params;
  p.beta1 = sc.beta1.size() ? sc.beta1 : default_beta1(sc.n_covariates);
  p.beta2 = sc.beta2.size() ? sc.beta2 : default_beta2(sc.n_covariates);
  p.theta = sc.theta;
  p.sigma_w = sc.sigma_w;

  CounterRng rng = CounterRng::stream(sc.seed, 0x5157ULL);
  truth.w = Eigen::VectorXd::Zero(n_counties);
  if (sc.spatial_mode == SpatialMode::moran) {
    const int q = sc.q > 0 ? sc.q : default_basis_rank(static_cast<std::size_t>(n_counties));
    truth.basis = compute_basis(truth.graph, q);
    p.delta.resize(truth.basis->q());
    for (Eigen::Index j = 0; j < p.delta.size(); ++j) p.delta[j] = sc.sigma_w * rng.normal();
    truth.w = spatial_effects(*truth.basis, p.delta);
  } else {
    p.delta.resize(0);
  }

  std::vector<double> county_pop(static_cast<std::size_t>(n_counties));
  for (auto& v : county_pop) v = sc.population_min + (sc.population_max - sc.population_min) * rng.uniform();

  truth.pi.resize(static_cast<Eigen::Index>(n));
  truth.mu.resize(static_cast<Eigen::Index>(n));
  p.z.resize(n);
  d.y.resize(n);
  d.population.resize(n);
  const Eigen::VectorXd eta1 = d.design * p.beta1;
  const Eigen::VectorXd eta2 = d.design * p.beta2;
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    truth.pi[k] = logistic(eta1[k]);
    truth.mu[k] = std::exp(eta2[k] + truth.w[d.county_index[i]]);
    p.z[i] = rng.uniform() < truth.pi[k] ? 1 : 0;
    d.y[i] = p.z[i] ? draw_negative_binomial(rng, truth.mu[k], sc.theta) : 0;
    d.population[i] = county_pop[static_cast<std::size_t>(d.county_index[i])];
  }
  return out;
}

} // namespace zinbsf
