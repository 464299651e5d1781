#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "zinbsf/core/model.hpp"
#include "zinbsf/diagnostics/summary.hpp"
#include "zinbsf/errors.hpp"
#include "zinbsf/io/csv.hpp"

namespace zinbsf::io {

/// "county_id:year" for every unit, in dataset row order.
inline std::vector<std::string> unit_labels(const Dataset& d) {
  std::vector<std::string> out;
  out.reserve(d.n_units());
  for (std::size_t i = 0; i < d.n_units(); ++i)
    out.push_back(d.county_ids[static_cast<std::size_t>(d.county_index[i])] + ":" +
                  std::to_string(d.years[static_cast<std::size_t>(d.year_index[i])]));
  return out;
}

/// Long format: parameter,statistic,value. Statistics per parameter are
/// mean, sd, hpd_lo, hpd_hi, ess, rhat, excludes_zero (NA when unavailable).
inline void write_summary_csv(const std::string& path, const FitSummary& s) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << "parameter,statistic,value\n";
  auto row = [&](const std::string& name, const char* stat, const std::string& value) {
    out << quote_if_needed(name) << ',' << stat << ',' << value << "\n";
  };
  for (const auto& p : s.parameters) {
    row(p.name, "mean", format_real(p.mean));
    row(p.name, "sd", format_real(p.sd));
    row(p.name, "hpd_lo", format_real(p.hpd.lo));
    row(p.name, "hpd_hi", format_real(p.hpd.hi));
    row(p.name, "ess", p.ess && !p.ess_flagged ? format_real(*p.ess) : "NA");
    row(p.name, "rhat", p.rhat && !p.rhat_flagged ? format_real(*p.rhat) : "NA");
    row(p.name, "excludes_zero", p.excludes_zero() ? "1" : "0");
  }
}

inline void write_unit_estimates_csv(const std::string& path, const FitSummary& s) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  const bool rates = !s.units.empty() && s.units.front().rate_mean.has_value();
  out << "county_id,year,pi_mean,pi_hpd_lo,pi_hpd_hi,mu_mean,mu_hpd_lo,mu_hpd_hi";
  if (rates) out << ",rate_per_1000_mean,rate_per_1000_hpd_lo,rate_per_1000_hpd_hi";
  out << "\n";
  for (const auto& u : s.units) {
    out << quote_if_needed(u.county_id) << ',' << u.year << ',' << format_real(u.pi_mean) << ','
        << format_real(u.pi_hpd.lo) << ',' << format_real(u.pi_hpd.hi) << ',' << format_real(u.mu_mean) << ','
        << format_real(u.mu_hpd.lo) << ',' << format_real(u.mu_hpd.hi);
    if (rates)
      out << ',' << format_real(*u.rate_mean) << ',' << format_real(u.rate_hpd->lo) << ','
          << format_real(u.rate_hpd->hi);
    out << "\n";
  }
}

} // namespace zinbsf::io
