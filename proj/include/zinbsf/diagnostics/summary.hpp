#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "zinbsf/core/model.hpp"
#include "zinbsf/diagnostics/hpd.hpp"
#include "zinbsf/diagnostics/mcmc_stats.hpp"
#include "zinbsf/inference/draws.hpp"

namespace zinbsf {

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  Interval hpd;
  /// Summed over chains; nullopt with fewer than 10 draws per chain.
  std::optional<double> ess;
  bool ess_flagged = false;
  /// Split R-hat; only with two or more chains.
  std::optional<double> rhat;
  bool rhat_flagged = false;
  bool excludes_zero() const { return hpd.excludes_zero(); }
};

struct UnitSummary {
  std::string county_id;
  int year = 0;
  double pi_mean = 0.0;
  Interval pi_hpd;
  double mu_mean = 0.0;
  Interval mu_hpd;
  /// mu / population x 1000, when population is known.
  std::optional<double> rate_mean;
  std::optional<Interval> rate_hpd;
};

struct FitSummary {
  double level = 0.95;
  std::vector<ParameterSummary> parameters;
  std::vector<UnitSummary> units;
};

namespace detail {

/// HPD when there are enough samples, otherwise the sample range.
inline Interval credible_interval(std::span<const double> x, double level) {
  if (x.size() >= 10) return hpd(x, level);
  auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  return {*lo, *hi};
}

inline double sd_of(std::span<const double> x, double mean) {
  if (x.size() < 2) return 0.0;
  double s = 0.0;
  for (double v : x) s += (v - mean) * (v - mean);
  return std::sqrt(s / static_cast<double>(x.size() - 1));
}

} // namespace detail

/// Per-parameter summaries. Pure in the draws: the same table always yields
/// bitwise identical output.
inline std::vector<ParameterSummary> summarize_parameters(const DrawTable& draws, double level = 0.95) {
  if (draws.total_draws() < 1) throw InputError("cannot summarize an empty draw table");
  const Eigen::MatrixXd pooled = draws.pooled();
  std::vector<ParameterSummary> out;
  for (Eigen::Index j = 0; j < draws.n_params(); ++j) {
    ParameterSummary ps;
    ps.name = draws.names[static_cast<std::size_t>(j)];
    std::vector<double> x(pooled.col(j).data(), pooled.col(j).data() + pooled.rows());
    double sum = 0.0;
    for (double v : x) sum += v;
    ps.mean = sum / static_cast<double>(x.size());
    ps.sd = detail::sd_of(x, ps.mean);
    ps.hpd = detail::credible_interval(x, level);

    std::vector<std::vector<double>> per_chain;
    bool ess_ok = true;
    double ess_total = 0.0;
    for (const auto& c : draws.chains) {
      per_chain.emplace_back(c.col(j).data(), c.col(j).data() + c.rows());
      if (c.rows() < 10) {
        ess_ok = false;
        continue;
      }
      const FlaggedValue e = ess(per_chain.back());
      ess_total += e.value;
      ps.ess_flagged = ps.ess_flagged || e.flagged;
    }
    if (ess_ok) ps.ess = ess_total;
    if (draws.n_chains() >= 2) {
      std::size_t shortest = per_chain.front().size();
      for (const auto& c : per_chain) shortest = std::min(shortest, c.size());
      if (shortest >= 4) {
        const FlaggedValue r = split_rhat(per_chain);
        ps.rhat = r.value;
        ps.rhat_flagged = r.flagged;
      }
    }
    out.push_back(std::move(ps));
  }
  return out;
}

/// Posterior mean and HPD of pi, mu (and rate per 1,000 children when the
/// dataset carries population) for every unit.
inline std::vector<UnitSummary> summarize_units(const DrawTable& draws, const Dataset& d, const MoranBasis* basis,
                                                double level = 0.95) {
  const ParameterLayout layout = ParameterLayout::from_names(draws.names);
  if (layout.p() != d.n_covariates()) throw StructuralError("draws and dataset disagree on covariate count");
  if (layout.spatial() != (basis != nullptr) || (basis && basis->q() != layout.q))
    throw StructuralError("draws and Moran basis disagree on spatial structure");
  const Eigen::MatrixXd pooled = draws.pooled();
  const Eigen::Index s_count = pooled.rows();
  const Eigen::MatrixXd b1 = pooled.middleCols(layout.beta1_offset(), layout.p()).transpose();
  const Eigen::MatrixXd b2 = pooled.middleCols(layout.beta2_offset(), layout.p()).transpose();
  Eigen::MatrixXd w; // n_counties x draws
  if (basis) w = basis->vectors * pooled.middleCols(layout.delta_offset(), layout.q).transpose();

  std::vector<UnitSummary> out(d.n_units());
  constexpr Eigen::Index kChunk = 128;
  const auto n = static_cast<Eigen::Index>(d.n_units());
  std::vector<double> pis(static_cast<std::size_t>(s_count)), mus(static_cast<std::size_t>(s_count)),
      rates(static_cast<std::size_t>(s_count));
  for (Eigen::Index start = 0; start < n; start += kChunk) {
    const Eigen::Index len = std::min(kChunk, n - start);
    const Eigen::MatrixXd eta1 = d.design.middleRows(start, len) * b1;
    Eigen::MatrixXd eta2 = d.design.middleRows(start, len) * b2;
    for (Eigen::Index r = 0; r < len; ++r) {
      const auto i = static_cast<std::size_t>(start + r);
      if (basis) eta2.row(r) += w.row(d.county_index[i]);
      UnitSummary& u = out[i];
      u.county_id = d.county_ids[static_cast<std::size_t>(d.county_index[i])];
      u.year = d.years[static_cast<std::size_t>(d.year_index[i])];
      double pi_sum = 0.0, mu_sum = 0.0;
      for (Eigen::Index s = 0; s < s_count; ++s) {
        const auto k = static_cast<std::size_t>(s);
        pis[k] = logistic(eta1(r, s));
        mus[k] = std::exp(eta2(r, s));
        pi_sum += pis[k];
        mu_sum += mus[k];
      }
      u.pi_mean = pi_sum / static_cast<double>(s_count);
      u.mu_mean = mu_sum / static_cast<double>(s_count);
      u.pi_hpd = detail::credible_interval(pis, level);
      u.mu_hpd = detail::credible_interval(mus, level);
      if (d.has_population()) {
        const double scale = 1000.0 / d.population[i];
        double rate_sum = 0.0;
        for (std::size_t k = 0; k < mus.size(); ++k) {
          rates[k] = mus[k] * scale;
          rate_sum += rates[k];
        }
        u.rate_mean = rate_sum / static_cast<double>(s_count);
        u.rate_hpd = detail::credible_interval(rates, level);
      }
    }
  }
  return out;
}

inline FitSummary summarize(const DrawTable& draws, const Dataset* d = nullptr, const MoranBasis* basis = nullptr,
                            double level = 0.95) {
  FitSummary fs;
  fs.level = level;
  fs.parameters = summarize_parameters(draws, level);
  if (d) fs.units = summarize_units(draws, *d, basis, level);
  return fs;
}

/// Split R-hat of every parameter across chains (flagged entries are NaN).
inline std::vector<std::pair<std::string, FlaggedValue>> rhat_by_parameter(const DrawTable& draws) {
  std::vector<std::pair<std::string, FlaggedValue>> out;
  for (Eigen::Index j = 0; j < draws.n_params(); ++j) {
    std::vector<std::vector<double>> per_chain;
    for (const auto& c : draws.chains) per_chain.emplace_back(c.col(j).data(), c.col(j).data() + c.rows());
    out.emplace_back(draws.names[static_cast<std::size_t>(j)], split_rhat(per_chain));
  }
  return out;
}

} // namespace zinbsf
