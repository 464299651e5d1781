#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "zinbsf/core/distributions.hpp"
#include "zinbsf/core/parallel.hpp"
#include "zinbsf/errors.hpp"
#include "zinbsf/spatial/moran_basis.hpp"

namespace zinbsf {

/// County-year observations. Rows are ordered county-major, year-minor
/// when produced by the loaders in this library.
struct Dataset {
  std::vector<std::int64_t> y;
  std::vector<int> county_index;
  std::vector<int> year_index;
  /// n_units x p; column 0 is the intercept.
  Eigen::MatrixXd design;
  /// Children under five per row; empty when not supplied.
  std::vector<double> population;

  std::vector<std::string> county_ids;
  std::vector<int> years;
  std::vector<std::string> covariate_names;

  std::size_t n_units() const { return y.size(); }
  std::size_t n_counties() const { return county_ids.size(); }
  std::size_t n_years() const { return years.size(); }
  Eigen::Index n_covariates() const { return design.cols(); }
  bool has_population() const { return !population.empty(); }
};

/// Checks the invariants every consumer of a Dataset relies on.
inline void validate(const Dataset& d, double standardize_tol = 1e-8) {
  const std::size_t n = d.n_units();
  if (n == 0) throw InputError("dataset is empty");
  if (static_cast<std::size_t>(d.design.rows()) != n || d.county_index.size() != n ||
      d.year_index.size() != n)
    throw StructuralError("dataset columns have inconsistent lengths");
  if (d.has_population() && d.population.size() != n)
    throw StructuralError("population column length does not match number of units");
  if (d.design.cols() < 1) throw StructuralError("design matrix has no columns");
  if (d.covariate_names.size() != static_cast<std::size_t>(d.design.cols()))
    throw StructuralError("covariate name count does not match design columns");

  std::set<std::pair<int, int>> keys;
  for (std::size_t i = 0; i < n; ++i) {
    if (d.y[i] < 0) throw InputError("negative count at row " + std::to_string(i));
    const int c = d.county_index[i], t = d.year_index[i];
    if (c < 0 || static_cast<std::size_t>(c) >= d.n_counties() || t < 0 ||
        static_cast<std::size_t>(t) >= d.n_years())
      throw StructuralError("county/year index out of range at row " + std::to_string(i));
    if (!keys.emplace(c, t).second)
      throw InputError("duplicate (county, year) pair at row " + std::to_string(i) + ": " + d.county_ids[c] +
                       ", " + std::to_string(d.years[t]));
    if (d.has_population() && !(d.population[i] > 0.0))
      throw InputError("population must be positive at row " + std::to_string(i));
  }

  if ((d.design.col(0).array() != 1.0).any()) throw InputError("design column 0 must be the constant 1");
  for (Eigen::Index j = 1; j < d.design.cols(); ++j) {
    const double mean = d.design.col(j).mean();
    const double sd =
        n > 1 ? std::sqrt((d.design.col(j).array() - mean).square().sum() / static_cast<double>(n - 1)) : 0.0;
    if (std::abs(mean) > standardize_tol || std::abs(sd - 1.0) > standardize_tol)
      throw InputError("design column '" + d.covariate_names[j] + "' is not centred and standardized");
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(d.design);
  if (qr.rank() < d.design.cols()) throw InputError("design matrix is not of full column rank");
}

/// Centre and scale columns [first, cols) to mean 0 and sample sd 1.
/// Returns (mean, sd) per standardized column.
inline std::vector<std::pair<double, double>> standardize_columns(Eigen::MatrixXd& m,
                                                                  const std::vector<std::string>& names,
                                                                  Eigen::Index first = 1) {
  std::vector<std::pair<double, double>> stats;
  const auto n = static_cast<double>(m.rows());
  for (Eigen::Index j = first; j < m.cols(); ++j) {
    const double mean = m.col(j).mean();
    m.col(j).array() -= mean;
    const double sd = m.rows() > 1 ? std::sqrt(m.col(j).squaredNorm() / (n - 1.0)) : 0.0;
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean))))
      throw InputError("zero variance column '" + names[static_cast<std::size_t>(j)] + "'");
    m.col(j) /= sd;
    stats.emplace_back(mean, sd);
  }
  return stats;
}

struct ModelSpec {
  CountFamily count_family = CountFamily::negative_binomial;
  bool spatial = false;
  /// Basis rank; 0 means default_basis_rank(n_counties). Ignored when !spatial.
  int q = 0;
  double prior_beta_sd = 10.0;
  double prior_log_theta_sd = 2.0;
  double prior_sigma_w_scale = 1.0;

  bool has_theta() const { return count_family == CountFamily::negative_binomial; }
};

inline void validate(const ModelSpec& s) {
  if (!(s.prior_beta_sd > 0) || !(s.prior_log_theta_sd > 0) || !(s.prior_sigma_w_scale > 0))
    throw InputError("prior scales must be positive");
  if (s.spatial && s.q < 0) throw InputError("basis rank q must be positive");
}

/// (beta1, beta2, theta, delta, sigma_w) plus the latent detection
/// indicators. theta is unused for the Poisson family; delta and sigma_w are
/// unused without spatial effects.
struct ParameterState {
  Eigen::VectorXd beta1;
  Eigen::VectorXd beta2;
  double theta = 1.0;
  Eigen::VectorXd delta;
  double sigma_w = 0.5;
  std::vector<std::uint8_t> z;
};

struct Predictors {
  Eigen::VectorXd pi;
  Eigen::VectorXd mu;
};

/// Per-county spatial effect W = M delta, or zeros when there is no basis.
inline Eigen::VectorXd county_effects(const ParameterState& s, const Dataset& d, const MoranBasis* basis) {
  if (!basis) return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d.n_counties()));
  if (static_cast<std::size_t>(basis->n_counties()) != d.n_counties())
    throw StructuralError("basis has " + std::to_string(basis->n_counties()) + " counties, dataset has " +
                          std::to_string(d.n_counties()));
  return spatial_effects(*basis, s.delta);
}

inline double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Detection and abundance linear predictors: x'beta1 and x'beta2 + W.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> linear_etas(const ParameterState& s, const Dataset& d,
                                                               const MoranBasis* basis) {
  if (s.beta1.size() != d.n_covariates() || s.beta2.size() != d.n_covariates())
    throw StructuralError("coefficient length does not match design columns");
  Eigen::VectorXd eta1 = d.design * s.beta1;
  Eigen::VectorXd eta2 = d.design * s.beta2;
  if (basis) {
    const Eigen::VectorXd w = county_effects(s, d, basis);
    for (Eigen::Index i = 0; i < eta2.size(); ++i) eta2[i] += w[d.county_index[static_cast<std::size_t>(i)]];
  }
  return {std::move(eta1), std::move(eta2)};
}

/// pi = logistic(x'beta1), mu = exp(x'beta2 + W_county).
inline Predictors linear_predictors(const ParameterState& s, const Dataset& d, const MoranBasis* basis) {
  auto [eta1, eta2] = linear_etas(s, d, basis);
  Predictors p;
  p.pi = eta1.unaryExpr([](double x) { return logistic(x); });
  p.mu = eta2.array().exp();
  return p;
}

/// Bounds applied to pi and mu inside likelihood evaluation.
struct ClampLimits {
  static constexpr double pi_floor = 1e-12;
  static constexpr double mu_floor = 1e-12;
  static constexpr double mu_ceiling = 1e12;
};

struct ClampStats {
  std::size_t pi = 0;
  std::size_t mu = 0;
  ClampStats& operator+=(const ClampStats& o) {
    pi += o.pi;
    mu += o.mu;
    return *this;
  }
};

inline double clamp_pi(double p, ClampStats* stats = nullptr) {
  constexpr double lo = ClampLimits::pi_floor, hi = 1.0 - ClampLimits::pi_floor;
  if (p < lo || p > hi || std::isnan(p)) {
    if (stats) ++stats->pi;
    return std::isnan(p) ? 0.5 : (p < lo ? lo : hi);
  }
  return p;
}

inline double clamp_mu(double m, ClampStats* stats = nullptr) {
  if (m < ClampLimits::mu_floor || m > ClampLimits::mu_ceiling) {
    if (stats) ++stats->mu;
    return m < ClampLimits::mu_floor ? ClampLimits::mu_floor : ClampLimits::mu_ceiling;
  }
  return m;
}

inline void clamp_predictors(Predictors& p, ClampStats* stats = nullptr) {
  for (Eigen::Index i = 0; i < p.pi.size(); ++i) {
    p.pi[i] = clamp_pi(p.pi[i], stats);
    p.mu[i] = clamp_mu(p.mu[i], stats);
  }
}

/// Marginal log-likelihood of each unit under the detection mixture.
/// Elements are computed independently; the total is their sum in index order.
inline Eigen::VectorXd loglik_pointwise(const ParameterState& s, const ModelSpec& spec, const Dataset& d,
                                        const MoranBasis* basis, int threads = 1,
                                        ClampStats* stats = nullptr) {
  if (spec.spatial != (basis != nullptr))
    throw StructuralError("a Moran basis must be supplied exactly when the model is spatial");
  if (spec.has_theta()) detail::check_dispersion(s.theta); // nothing may throw inside the parallel loop
  Predictors p = linear_predictors(s, d, basis);
  clamp_predictors(p, stats);
  const auto n = static_cast<std::ptrdiff_t>(d.n_units());
  Eigen::VectorXd ll(n);
  detail::parallel_for(n, threads, [&](std::ptrdiff_t i) {
    ll[i] = zi_logpmf(spec.count_family, d.y[static_cast<std::size_t>(i)], p.pi[i], p.mu[i], s.theta);
  });
  return ll;
}

inline double normal_logpdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

/// Half-normal density on (0, inf) with the given scale.
inline double half_normal_logpdf(double x, double scale) {
  if (x <= 0) return -INFINITY;
  return normal_logpdf(x, 0.0, scale) + std::log(2.0);
}

/// Joint log prior density with respect to the sampling coordinates
/// (beta1, beta2, log theta, delta, log sigma_w). The prior on theta is
/// stated directly on log theta; sigma_w carries a half-normal prior plus
/// the log-Jacobian of the log transform.
inline double log_prior(const ParameterState& s, const ModelSpec& spec) {
  double lp = 0.0;
  for (Eigen::Index k = 0; k < s.beta1.size(); ++k) lp += normal_logpdf(s.beta1[k], 0.0, spec.prior_beta_sd);
  for (Eigen::Index k = 0; k < s.beta2.size(); ++k) lp += normal_logpdf(s.beta2[k], 0.0, spec.prior_beta_sd);
  if (spec.has_theta()) {
    if (!(s.theta > 0) || !std::isfinite(s.theta)) throw DomainError("theta must be positive");
    lp += normal_logpdf(std::log(s.theta), 0.0, spec.prior_log_theta_sd);
  }
  if (spec.spatial) {
    if (!(s.sigma_w > 0) || !std::isfinite(s.sigma_w)) throw DomainError("sigma_w must be positive");
    for (Eigen::Index j = 0; j < s.delta.size(); ++j) lp += normal_logpdf(s.delta[j], 0.0, s.sigma_w);
    lp += half_normal_logpdf(s.sigma_w, spec.prior_sigma_w_scale) + std::log(s.sigma_w);
  }
  return lp;
}

/// Log-likelihood of the augmented data (y, z): Bernoulli detection term
/// plus the count term for detected units. Units with z = 0 and y > 0 have
/// probability zero.
inline double complete_data_loglik(const ParameterState& s, const ModelSpec& spec, const Dataset& d,
                                   const MoranBasis* basis) {
  Predictors p = linear_predictors(s, d, basis);
  clamp_predictors(p);
  double total = 0.0;
  for (std::size_t i = 0; i < d.n_units(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    if (s.z[i]) {
      total += std::log(p.pi[k]) + count_logpmf(spec.count_family, d.y[i], p.mu[k], s.theta);
    } else {
      if (d.y[i] > 0) return -INFINITY;
      total += std::log1p(-p.pi[k]);
    }
  }
  return total;
}

} // namespace zinbsf
