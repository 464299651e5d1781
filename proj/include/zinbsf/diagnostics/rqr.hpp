#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <Eigen/Dense>

#include "zinbsf/core/model.hpp"
#include "zinbsf/errors.hpp"
#include "zinbsf/inference/draws.hpp"
#include "zinbsf/rng.hpp"

namespace zinbsf {

inline constexpr double kRqrClamp = 1e-10;

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double normal_quantile(double u) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), u);
}

/// u = F(y - 1) + v f(y) under the zero-inflated count model, clamped to
/// [1e-10, 1 - 1e-10], and its standard-normal quantile.
struct QuantileResidual {
  double u = 0.0;
  double residual = 0.0;
  bool clamped = false;
};

inline QuantileResidual randomized_quantile_residual(CountFamily family, std::int64_t y, double pi, double mu,
                                                     double theta, double v) {
  const double lower = zi_cdf(family, y - 1, pi, mu, theta);
  const double mass = std::exp(zi_logpmf(family, y, pi, mu, theta));
  QuantileResidual r;
  r.u = lower + v * mass;
  if (!(r.u >= kRqrClamp)) {
    r.u = kRqrClamp;
    r.clamped = true;
  } else if (r.u > 1.0 - kRqrClamp) {
    r.u = 1.0 - kRqrClamp;
    r.clamped = true;
  }
  r.residual = normal_quantile(r.u);
  return r;
}

enum class RqrMode {
  /// one residual set at the posterior mean of (beta1, beta2, theta, delta)
  posterior_mean,
  /// each unit evaluated at a uniformly chosen posterior draw
  per_draw,
};

struct RqrResult {
  Eigen::VectorXd residuals;
  Eigen::VectorXd u;
  std::size_t n_clamped = 0;
};

/// Posterior mean of each parameter over a pooled draw matrix.
inline ParameterState posterior_mean_state(const Eigen::MatrixXd& pooled, const ParameterLayout& layout) {
  const Eigen::VectorXd mean = pooled.colwise().mean().transpose();
  return layout.unflatten(mean);
}

/// Randomized quantile residuals for every unit. Randomness for unit i is
/// drawn from rng in unit order.
inline RqrResult rqr(const ModelSpec& spec, const Dataset& d, const DrawTable& draws, const MoranBasis* basis,
                     CounterRng& rng, RqrMode mode = RqrMode::posterior_mean) {
  if (draws.total_draws() < 1) throw InputError("RQR needs at least one posterior draw");
  if (d.n_units() == 0) throw InputError("RQR on an empty dataset");
  const ParameterLayout layout = ParameterLayout::from_names(draws.names);
  const Eigen::MatrixXd pooled = draws.pooled();
  const auto n = static_cast<Eigen::Index>(d.n_units());
  RqrResult out;
  out.residuals.resize(n);
  out.u.resize(n);

  auto emit = [&](Eigen::Index i, const ParameterState& s, double pi, double mu) {
    const auto q = randomized_quantile_residual(spec.count_family, d.y[static_cast<std::size_t>(i)], clamp_pi(pi),
                                                clamp_mu(mu), s.theta, rng.uniform());
    out.u[i] = q.u;
    out.residuals[i] = q.residual;
    if (q.clamped) ++out.n_clamped;
  };

  if (mode == RqrMode::posterior_mean) {
    const ParameterState s = posterior_mean_state(pooled, layout);
    const Predictors p = linear_predictors(s, d, basis);
    for (Eigen::Index i = 0; i < n; ++i) emit(i, s, p.pi[i], p.mu[i]);
    return out;
  }

  std::vector<ParameterState> states;
  states.reserve(static_cast<std::size_t>(pooled.rows()));
  for (Eigen::Index r = 0; r < pooled.rows(); ++r) states.push_back(layout.unflatten(pooled.row(r)));
  std::vector<Eigen::VectorXd> w_cache(states.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto pick = static_cast<std::size_t>(rng.uniform() * static_cast<double>(states.size()));
    const ParameterState& s = states[std::min(pick, states.size() - 1)];
    const auto row = d.design.row(i);
    double eta2 = row.dot(s.beta2);
    if (basis) {
      auto& w = w_cache[pick];
      if (w.size() == 0) w = spatial_effects(*basis, s.delta);
      eta2 += w[d.county_index[static_cast<std::size_t>(i)]];
    }
    emit(i, s, logistic(row.dot(s.beta1)), std::exp(eta2));
  }
  return out;
}

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Kolmogorov survival function Q(lambda) = 2 sum (-1)^(j-1) exp(-2 j^2 lambda^2).
inline double kolmogorov_survival(double lambda) {
  if (lambda < 0.2) return 1.0;
  double sum = 0.0, sign = 1.0;
  for (int j = 1; j <= 200; ++j) {
    const double term = sign * std::exp(-2.0 * j * j * lambda * lambda);
    sum += term;
    if (std::abs(term) <= 1e-12 * std::abs(sum)) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

/// One-sample Kolmogorov-Smirnov test against the standard normal, with the
/// Stephens small-sample correction to the asymptotic p-value.
inline KsResult ks_test_normal(const Eigen::Ref<const Eigen::VectorXd>& x) {
  const auto n = x.size();
  if (n < 1) throw InputError("KS test on empty sample");
  std::vector<double> s(x.data(), x.data() + n);
  std::sort(s.begin(), s.end());
  const double nd = static_cast<double>(n);
  double d = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double f = normal_cdf(s[static_cast<std::size_t>(i)]);
    d = std::max({d, static_cast<double>(i + 1) / nd - f, f - static_cast<double>(i) / nd});
  }
  const double root = std::sqrt(nd);
  return {d, kolmogorov_survival((root + 0.12 + 0.11 / root) * d)};
}

/// Pairs of (theoretical normal quantile, sorted residual) for QQ plots.
inline std::vector<std::pair<double, double>> qq_pairs(const Eigen::Ref<const Eigen::VectorXd>& residuals) {
  std::vector<double> s(residuals.data(), residuals.data() + residuals.size());
  std::sort(s.begin(), s.end());
  std::vector<std::pair<double, double>> out;
  out.reserve(s.size());
  const double n = static_cast<double>(s.size());
  for (std::size_t i = 0; i < s.size(); ++i)
    out.emplace_back(normal_quantile((static_cast<double>(i) + 0.5) / n), s[i]);
  return out;
}

} // namespace zinbsf
