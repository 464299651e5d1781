#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "zinbsf/simulate/simulate.hpp"

namespace fixtures {

/// Small simulated dataset on a rows x cols lattice.
inline zinbsf::SimulatedData small(int rows, int cols, int years, int n_cov, std::uint64_t seed,
                                   zinbsf::SpatialMode mode = zinbsf::SpatialMode::none, double sigma_w = 0.0,
                                   double theta = 1.5) {
  zinbsf::SimulationScenario sc;
  sc.rows = rows;
  sc.cols = cols;
  sc.n_years = years;
  sc.n_covariates = n_cov;
  sc.seed = seed;
  sc.spatial_mode = mode;
  sc.sigma_w = sigma_w;
  sc.theta = theta;
  return zinbsf::simulate_dataset(sc);
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("zinbsf_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

} // namespace fixtures
