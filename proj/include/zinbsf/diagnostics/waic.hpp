#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "zinbsf/errors.hpp"

namespace zinbsf {

struct WaicResult {
  double waic = 0.0;
  double se = 0.0;
  double p_waic = 0.0;
  double lppd = 0.0;
  /// -2 (lppd_i - p_i) per unit.
  Eigen::VectorXd pointwise;
};

namespace detail {

inline double sample_variance(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const auto n = v.size();
  if (n < 2) return 0.0;
  const double m = v.mean();
  return (v.array() - m).square().sum() / static_cast<double>(n - 1);
}

} // namespace detail

/// WAIC from an n_draws x n_units matrix of pointwise log-likelihoods.
/// p_i is the sample variance over draws; se = sqrt(n * var_i(waic_i)),
/// and 0 for a single unit.
inline WaicResult waic(const Eigen::Ref<const Eigen::MatrixXd>& ll) {
  if (ll.rows() < 2) throw InputError("WAIC needs at least two draws");
  if (ll.cols() < 1) throw InputError("WAIC needs at least one unit");
  if (!ll.allFinite()) throw InputError("pointwise log-likelihood contains non-finite entries");
  const auto s = static_cast<double>(ll.rows());
  WaicResult r;
  r.pointwise.resize(ll.cols());
  for (Eigen::Index i = 0; i < ll.cols(); ++i) {
    const auto col = ll.col(i);
    const double mx = col.maxCoeff();
    const double lppd_i = mx + std::log((col.array() - mx).exp().sum() / s);
    const double p_i = detail::sample_variance(col);
    r.lppd += lppd_i;
    r.p_waic += p_i;
    r.pointwise[i] = -2.0 * (lppd_i - p_i);
  }
  r.waic = -2.0 * (r.lppd - r.p_waic);
  r.se = std::sqrt(static_cast<double>(ll.cols()) * detail::sample_variance(r.pointwise));
  return r;
}

struct WaicComparison {
  WaicResult a;
  WaicResult b;
  /// waic(a) - waic(b)
  double difference = 0.0;
  /// sqrt(n * var_i(waic_a,i - waic_b,i))
  double se_difference = 0.0;
  std::string verdict;
};

/// "indistinguishable" when |difference| <= 2 se_difference, otherwise the
/// name of the model with the lower WAIC.
inline std::string waic_verdict(double difference, double se_difference, const std::string& name_a,
                                const std::string& name_b) {
  if (std::abs(difference) <= 2.0 * se_difference) return "indistinguishable";
  return difference < 0.0 ? name_a : name_b;
}

inline WaicComparison compare_waic(const Eigen::Ref<const Eigen::MatrixXd>& ll_a,
                                   const Eigen::Ref<const Eigen::MatrixXd>& ll_b, const std::string& name_a = "a",
                                   const std::string& name_b = "b") {
  if (ll_a.cols() != ll_b.cols())
    throw InputError("unit counts differ: " + std::to_string(ll_a.cols()) + " vs " + std::to_string(ll_b.cols()));
  WaicComparison c;
  c.a = waic(ll_a);
  c.b = waic(ll_b);
  c.difference = c.a.waic - c.b.waic;
  const Eigen::VectorXd diff = c.a.pointwise - c.b.pointwise;
  c.se_difference = std::sqrt(static_cast<double>(diff.size()) * detail::sample_variance(diff));
  c.verdict = waic_verdict(c.difference, c.se_difference, name_a, name_b);
  return c;
}

} // namespace zinbsf
