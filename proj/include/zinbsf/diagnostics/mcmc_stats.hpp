#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "zinbsf/errors.hpp"

namespace zinbsf {

/// A statistic that may be undefined; `flagged` marks degenerate input
/// (constant chain, identical chains) and `value` is then a convention.
struct FlaggedValue {
  double value = 0.0;
  bool flagged = false;
};

/// Effective sample size by Geyer's initial positive sequence estimator.
/// A constant chain yields 0 with the flag set.
inline FlaggedValue ess(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 10) throw InputError("effective sample size needs at least 10 samples");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  std::vector<double> c(n);
  double var0 = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    c[t] = x[t] - mean;
    var0 += c[t] * c[t];
  }
  var0 /= static_cast<double>(n);
  if (!(var0 > 0.0)) return {0.0, true};

  auto rho = [&](std::size_t k) {
    double s = 0.0;
    for (std::size_t t = 0; t + k < n; ++t) s += c[t] * c[t + k];
    return s / (static_cast<double>(n) * var0);
  };
  double sum = 0.0;
  for (std::size_t k = 0; k + 1 < n; k += 2) {
    const double pair = rho(k) + rho(k + 1);
    if (pair <= 0.0) break;
    sum += pair;
  }
  const double tau = -1.0 + 2.0 * sum;
  const double e = tau > 0.0 ? static_cast<double>(n) / tau : static_cast<double>(n);
  return {std::min(e, static_cast<double>(n)), false};
}

/// Split potential scale reduction factor. Each chain is truncated to an
/// even length and split in half. Flagged (value NaN) when within-chain
/// variance is zero or two chains are identical.
inline FlaggedValue split_rhat(const std::vector<std::vector<double>>& chains) {
  if (chains.size() < 2) throw InputError("split R-hat needs at least two chains");
  std::size_t n = chains.front().size();
  for (const auto& c : chains) n = std::min(n, c.size());
  const std::size_t half = n / 2;
  if (half < 2) throw InputError("split R-hat needs at least four draws per chain");

  for (std::size_t a = 0; a < chains.size(); ++a)
    for (std::size_t b = a + 1; b < chains.size(); ++b)
      if (std::equal(chains[a].begin(), chains[a].begin() + static_cast<std::ptrdiff_t>(n), chains[b].begin()))
        return {std::nan(""), true};

  std::vector<double> means, vars;
  for (const auto& c : chains) {
    for (int part = 0; part < 2; ++part) {
      const std::size_t off = static_cast<std::size_t>(part) * half;
      double m = 0.0;
      for (std::size_t t = 0; t < half; ++t) m += c[off + t];
      m /= static_cast<double>(half);
      double v = 0.0;
      for (std::size_t t = 0; t < half; ++t) v += (c[off + t] - m) * (c[off + t] - m);
      means.push_back(m);
      vars.push_back(v / static_cast<double>(half - 1));
    }
  }
  const double m_chains = static_cast<double>(means.size());
  double w = 0.0, grand = 0.0;
  for (std::size_t j = 0; j < means.size(); ++j) {
    w += vars[j];
    grand += means[j];
  }
  w /= m_chains;
  grand /= m_chains;
  if (!(w > 0.0)) return {std::nan(""), true};
  double b = 0.0;
  for (double m : means) b += (m - grand) * (m - grand);
  const double h = static_cast<double>(half);
  b *= h / (m_chains - 1.0);
  const double var_plus = (h - 1.0) / h * w + b / h;
  return {std::sqrt(var_plus / w), false};
}

} // namespace zinbsf
