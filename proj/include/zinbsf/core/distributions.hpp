#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "zinbsf/errors.hpp"

namespace zinbsf {

enum class CountFamily { negative_binomial, poisson };

inline const char* to_string(CountFamily f) {
  return f == CountFamily::poisson ? "poisson" : "negative-binomial";
}

inline CountFamily parse_count_family(const std::string& s) {
  if (s == "negative-binomial" || s == "nb" || s == "negbin") return CountFamily::negative_binomial;
  if (s == "poisson") return CountFamily::poisson;
  throw InputError("unknown count family '" + s + "' (expected negative-binomial or poisson)");
}

namespace detail {

// glibc's lgamma writes the global signgam; the reentrant form does not.
inline double log_gamma(double x) {
#if defined(__GLIBC__)
  int sign = 0;
  return ::lgamma_r(x, &sign);
#else
  return std::lgamma(x);
#endif
}

/// log Γ(y + θ) − log Γ(θ), exact product form for small y.
inline double log_rising_factorial(std::int64_t y, double theta) {
  if (y <= 8) {
    double s = 0.0;
    for (std::int64_t k = 0; k < y; ++k) s += std::log(theta + static_cast<double>(k));
    return s;
  }
  return log_gamma(static_cast<double>(y) + theta) - log_gamma(theta);
}

inline double log_factorial(std::int64_t y) { return log_gamma(static_cast<double>(y) + 1.0); }

inline double log_sum_exp(double a, double b) {
  if (a < b) std::swap(a, b);
  if (a == -INFINITY) return a;
  return a + std::log1p(std::exp(b - a));
}

inline void check_mean(double mu) {
  if (!std::isfinite(mu) || mu <= 0.0) throw DomainError("mean must be finite and positive");
}

inline void check_dispersion(double theta) {
  if (!std::isfinite(theta) || theta <= 0.0)
    throw DomainError("dispersion must be finite and positive");
}

inline void check_probability(double pi) {
  if (!(pi > 0.0 && pi < 1.0)) throw DomainError("detection probability must lie in (0, 1)");
}

} // namespace detail

/// Negative binomial log-pmf, mean/dispersion form: variance mu + mu^2/theta.
inline double nb_logpmf(std::int64_t y, double mu, double theta) {
  detail::check_mean(mu);
  detail::check_dispersion(theta);
  if (y < 0) return -INFINITY;
  // theta*log(theta/(theta+mu)) + y*log(mu/(theta+mu)), written with log1p
  const double zero_part = -theta * std::log1p(mu / theta);
  if (y == 0) return zero_part;
  const double yd = static_cast<double>(y);
  return detail::log_rising_factorial(y, theta) - detail::log_factorial(y) + zero_part -
         yd * std::log1p(theta / mu);
}

inline double poisson_logpmf(std::int64_t y, double mu) {
  detail::check_mean(mu);
  if (y < 0) return -INFINITY;
  if (y == 0) return -mu;
  return static_cast<double>(y) * std::log(mu) - mu - detail::log_factorial(y);
}

/// Log-pmf of the count component; theta is ignored for the Poisson family.
inline double count_logpmf(CountFamily family, std::int64_t y, double mu, double theta) {
  return family == CountFamily::poisson ? poisson_logpmf(y, mu) : nb_logpmf(y, mu, theta);
}

/// Marginal log-pmf of the detection mixture: zero with probability 1 - pi,
/// a draw from the count family with probability pi.
inline double zi_logpmf(CountFamily family, std::int64_t y, double pi, double mu, double theta) {
  detail::check_probability(pi);
  if (y < 0) return -INFINITY;
  const double count = count_logpmf(family, y, mu, theta);
  if (y > 0) return std::log(pi) + count;
  return detail::log_sum_exp(std::log1p(-pi), std::log(pi) + count);
}

inline double zinb_logpmf(std::int64_t y, double pi, double mu, double theta) {
  return zi_logpmf(CountFamily::negative_binomial, y, pi, mu, theta);
}

inline double zip_logpmf(std::int64_t y, double pi, double mu) {
  return zi_logpmf(CountFamily::poisson, y, pi, mu, 1.0);
}

/// CDF of the count component at y (0 for y < 0). Uses the regularized
/// incomplete beta (NB) and gamma (Poisson) functions.
inline double count_cdf(CountFamily family, std::int64_t y, double mu, double theta) {
  detail::check_mean(mu);
  if (y < 0) return 0.0;
  if (family == CountFamily::poisson)
    return boost::math::gamma_q(static_cast<double>(y) + 1.0, mu);
  detail::check_dispersion(theta);
  const double p = theta / (theta + mu);
  return boost::math::ibeta(theta, static_cast<double>(y) + 1.0, p);
}

inline double zi_cdf(CountFamily family, std::int64_t y, double pi, double mu, double theta) {
  detail::check_probability(pi);
  if (y < 0) return 0.0;
  const double f = (1.0 - pi) + pi * count_cdf(family, y, mu, theta);
  return f > 1.0 ? 1.0 : f;
}

inline double zinb_cdf(std::int64_t y, double pi, double mu, double theta) {
  return zi_cdf(CountFamily::negative_binomial, y, pi, mu, theta);
}

} // namespace zinbsf
