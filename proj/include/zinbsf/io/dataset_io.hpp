#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "zinbsf/core/model.hpp"
#include "zinbsf/errors.hpp"
#include "zinbsf/io/csv.hpp"
#include "zinbsf/simulate/simulate.hpp"

namespace zinbsf::io {

struct LoadReport {
  std::size_t dropped_missing = 0;
  std::size_t unmatched_counts = 0;
  std::size_t unmatched_covariates = 0;
  /// (mean, sd) of each raw covariate before standardization.
  std::vector<std::pair<double, double>> standardization;
};

struct LoadedDataset {
  Dataset dataset;
  LoadReport report;
};

/// Inner join of counts.csv (county_id, year, y[, population]) and
/// covariates.csv (county_id, year, <name>...) on (county_id, year). Rows
/// with a missing value are dropped and counted. Output rows are ordered by
/// county id, then year; covariates are centred and standardized.
inline LoadedDataset load_dataset(const std::string& counts_path, const std::string& covariates_path) {
  const CsvTable counts = read_csv(counts_path);
  const CsvTable covs = read_csv(covariates_path);
  const std::size_t c_id = counts.require("county_id"), c_year = counts.require("year"), c_y = counts.require("y");
  const auto c_pop = counts.find("population");
  const std::size_t v_id = covs.require("county_id"), v_year = covs.require("year");

  std::vector<std::size_t> cov_cols;
  std::vector<std::string> cov_names{"intercept"};
  for (std::size_t j = 0; j < covs.header.size(); ++j) {
    if (j == v_id || j == v_year) continue;
    cov_cols.push_back(j);
    cov_names.push_back(covs.header[j]);
  }

  using Key = std::pair<std::string, std::int64_t>;
  auto parse_year = [](const CsvTable& t, const CsvRow& r, std::size_t col) {
    auto y = parse_integer(r.fields[col]);
    if (!y) throw InputError(t.where(r) + ": non-numeric year '" + r.fields[col] + "'");
    return *y;
  };

  LoadedDataset out;
  LoadReport& rep = out.report;

  struct CountRow {
    std::int64_t y;
    double population;
    bool missing;
  };
  std::map<Key, CountRow> count_rows;
  for (const auto& r : counts.rows) {
    if (is_missing(r.fields[c_id]) || is_missing(r.fields[c_year]))
      throw InputError(counts.where(r) + ": missing county_id or year");
    Key key{r.fields[c_id], parse_year(counts, r, c_year)};
    CountRow row{0, 0.0, false};
    if (is_missing(r.fields[c_y])) {
      row.missing = true;
    } else {
      auto y = parse_integer(r.fields[c_y]);
      if (!y) throw InputError(counts.where(r) + ": non-numeric count '" + r.fields[c_y] + "'");
      if (*y < 0) throw InputError(counts.where(r) + ": negative count");
      row.y = *y;
    }
    if (c_pop) {
      if (is_missing(r.fields[*c_pop])) {
        row.missing = true;
      } else {
        auto p = parse_real(r.fields[*c_pop]);
        if (!p) throw InputError(counts.where(r) + ": non-numeric population '" + r.fields[*c_pop] + "'");
        if (!(*p > 0)) throw InputError(counts.where(r) + ": population must be positive");
        row.population = *p;
      }
    }
    if (!count_rows.emplace(key, row).second)
      throw InputError(counts.where(r) + ": duplicate (county_id, year) key (" + key.first + ", " +
                       std::to_string(key.second) + ")");
  }

  struct CovRow {
    std::vector<double> values;
    bool missing;
  };
  std::map<Key, CovRow> cov_rows;
  for (const auto& r : covs.rows) {
    if (is_missing(r.fields[v_id]) || is_missing(r.fields[v_year]))
      throw InputError(covs.where(r) + ": missing county_id or year");
    Key key{r.fields[v_id], parse_year(covs, r, v_year)};
    CovRow row{{}, false};
    for (std::size_t j : cov_cols) {
      if (is_missing(r.fields[j])) {
        row.missing = true;
        row.values.push_back(0.0);
        continue;
      }
      auto v = parse_real(r.fields[j]);
      if (!v) throw InputError(covs.where(r) + ": non-numeric value '" + r.fields[j] + "' in column '" + covs.header[j] + "'");
      row.values.push_back(*v);
    }
    if (!cov_rows.emplace(key, std::move(row)).second)
      throw InputError(covs.where(r) + ": duplicate (county_id, year) key (" + key.first + ", " +
                       std::to_string(key.second) + ")");
  }

  std::vector<std::pair<const Key*, std::pair<const CountRow*, const CovRow*>>> joined;
  for (const auto& [key, crow] : count_rows) {
    auto it = cov_rows.find(key);
    if (it == cov_rows.end()) {
      ++rep.unmatched_counts;
      continue;
    }
    if (crow.missing || it->second.missing) {
      ++rep.dropped_missing;
      continue;
    }
    joined.push_back({&key, {&crow, &it->second}});
  }
  for (const auto& [key, _] : cov_rows)
    if (!count_rows.count(key)) ++rep.unmatched_covariates;
  if (joined.empty()) throw InputError("joining '" + counts_path + "' and '" + covariates_path + "' produced an empty dataset");

  Dataset& d = out.dataset;
  d.covariate_names = cov_names;
  std::map<std::string, int> county_pos;
  std::map<std::int64_t, int> year_pos;
  for (const auto& j : joined) {
    county_pos.emplace(j.first->first, 0);
    year_pos.emplace(j.first->second, 0);
  }
  for (auto& [id, pos] : county_pos) {
    pos = static_cast<int>(d.county_ids.size());
    d.county_ids.push_back(id);
  }
  for (auto& [yr, pos] : year_pos) {
    pos = static_cast<int>(d.years.size());
    d.years.push_back(static_cast<int>(yr));
  }

  const auto n = static_cast<Eigen::Index>(joined.size());
  d.design.resize(n, static_cast<Eigen::Index>(cov_names.size()));
  d.y.resize(joined.size());
  d.county_index.resize(joined.size());
  d.year_index.resize(joined.size());
  if (c_pop) d.population.resize(joined.size());
  for (std::size_t i = 0; i < joined.size(); ++i) {
    const auto& [key, rows] = joined[i];
    const auto r = static_cast<Eigen::Index>(i);
    d.y[i] = rows.first->y;
    d.county_index[i] = county_pos.at(key->first);
    d.year_index[i] = year_pos.at(key->second);
    if (c_pop) d.population[i] = rows.first->population;
    d.design(r, 0) = 1.0;
    for (std::size_t j = 0; j < cov_cols.size(); ++j) d.design(r, static_cast<Eigen::Index>(j) + 1) = rows.second->values[j];
  }
  rep.standardization = standardize_columns(d.design, d.covariate_names);
  validate(d);
  return out;
}

/// Load from a directory holding counts.csv and covariates.csv.
inline LoadedDataset load_dataset_dir(const std::filesystem::path& dir) {
  return load_dataset((dir / "counts.csv").string(), (dir / "covariates.csv").string());
}

inline void write_counts_csv(const std::string& path, const Dataset& d) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << "county_id,year,y" << (d.has_population() ? ",population" : "") << "\n";
  for (std::size_t i = 0; i < d.n_units(); ++i) {
    out << quote_if_needed(d.county_ids[static_cast<std::size_t>(d.county_index[i])]) << ','
        << d.years[static_cast<std::size_t>(d.year_index[i])] << ',' << d.y[i];
    if (d.has_population()) out << ',' << format_real(d.population[i]);
    out << "\n";
  }
}

/// Non-intercept design columns, one row per unit.
inline void write_covariates_csv(const std::string& path, const Dataset& d) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << "county_id,year";
  for (std::size_t j = 1; j < d.covariate_names.size(); ++j) out << ',' << quote_if_needed(d.covariate_names[j]);
  out << "\n";
  for (std::size_t i = 0; i < d.n_units(); ++i) {
    out << quote_if_needed(d.county_ids[static_cast<std::size_t>(d.county_index[i])]) << ','
        << d.years[static_cast<std::size_t>(d.year_index[i])];
    for (Eigen::Index j = 1; j < d.design.cols(); ++j) out << ',' << format_real(d.design(static_cast<Eigen::Index>(i), j));
    out << "\n";
  }
}

inline void write_adjacency(const std::string& path, const AdjacencyGraph& g) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << "county_id_a,county_id_b\n";
  for (auto [i, j] : g.edges)
    out << g.county_ids[static_cast<std::size_t>(i)] << ',' << g.county_ids[static_cast<std::size_t>(j)] << "\n";
}

/// Per-unit latent truth: W, z, pi, mu (plus the count, for convenience).
inline void write_truth_csv(const std::string& path, const Dataset& d, const SimulationTruth& t) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << "county_id,year,y,w,z,pi,mu\n";
  for (std::size_t i = 0; i < d.n_units(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    out << quote_if_needed(d.county_ids[static_cast<std::size_t>(d.county_index[i])]) << ','
        << d.years[static_cast<std::size_t>(d.year_index[i])] << ',' << d.y[i] << ','
        << format_real(t.w[d.county_index[i]]) << ',' << int(t.params.z[i]) << ',' << format_real(t.pi[k]) << ','
        << format_real(t.mu[k]) << "\n";
  }
}

/// True coefficients as name,value rows.
inline void write_truth_parameters(const std::string& path, const Dataset& d, const SimulationTruth& t) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << "parameter,value\n";
  for (Eigen::Index j = 0; j < t.params.beta1.size(); ++j)
    out << "beta1[" << d.covariate_names[static_cast<std::size_t>(j)] << "]," << format_real(t.params.beta1[j]) << "\n";
  for (Eigen::Index j = 0; j < t.params.beta2.size(); ++j)
    out << "beta2[" << d.covariate_names[static_cast<std::size_t>(j)] << "]," << format_real(t.params.beta2[j]) << "\n";
  out << "theta," << format_real(t.params.theta) << "\n";
  if (t.basis) {
    out << "sigma_w," << format_real(t.params.sigma_w) << "\n";
    for (Eigen::Index j = 0; j < t.params.delta.size(); ++j)
      out << "delta[" << j + 1 << "]," << format_real(t.params.delta[j]) << "\n";
  }
}

} // namespace zinbsf::io
