#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "zinbsf/core/model.hpp"
#include "zinbsf/diagnostics/rqr.hpp"
#include "zinbsf/diagnostics/summary.hpp"
#include "zinbsf/diagnostics/waic.hpp"
#include "zinbsf/errors.hpp"
#include "zinbsf/inference/draws.hpp"
#include "zinbsf/inference/sampler.hpp"
#include "zinbsf/io/binary.hpp"
#include "zinbsf/io/dataset_io.hpp"
#include "zinbsf/io/results.hpp"
#include "zinbsf/simulate/simulate.hpp"
#include "zinbsf/spatial/graph.hpp"
#include "zinbsf/spatial/moran_basis.hpp"

namespace zinbsf::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using io::format_real;
using io::load_dataset;
using io::load_dataset_dir;
using io::LoadedDataset;

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumerical = 3;

/// Everything `fit` reads from its config file or flags.
struct FitSettings {
  std::string counts;
  std::string covariates;
  std::string adjacency;
  std::string out;
  std::string family = "negative-binomial";
  std::string spatial = "off";
  int q = 0;
  double prior_beta_sd = 10.0;
  double prior_log_theta_sd = 2.0;
  double prior_sigma_w_scale = 1.0;
  int iterations = 60000;
  int burnin = 20000;
  int thin = 10;
  std::uint64_t seed = 1;
  double scale_beta1 = 0.05;
  double scale_beta2 = 0.02;
  double scale_theta = 0.1;
  double scale_delta = 0.05;
  double scale_sigma_w = 0.3;
  double target_vector = 0.234;
  double target_scalar = 0.44;
  int adapt_window = 50;
  bool adapt_covariance = true;
  int chains = 4;
  int threads = 1;
  std::string eigen_solver = "auto";
  double level = 0.95;
};

inline bool parse_on_off(const std::string& s) {
  if (s == "on" || s == "true" || s == "1" || s == "yes") return true;
  if (s == "off" || s == "false" || s == "0" || s == "no") return false;
  throw InputError("expected on/off, got '" + s + "'");
}

inline EigenSolverKind parse_solver(const std::string& s) {
  if (s == "auto") return EigenSolverKind::automatic;
  if (s == "dense") return EigenSolverKind::dense;
  if (s == "lanczos") return EigenSolverKind::lanczos;
  throw InputError("eigen_solver must be auto, dense or lanczos, got '" + s + "'");
}

inline ModelSpec model_spec(const FitSettings& s) {
  ModelSpec m;
  m.count_family = parse_count_family(s.family);
  m.spatial = parse_on_off(s.spatial);
  m.q = s.q;
  m.prior_beta_sd = s.prior_beta_sd;
  m.prior_log_theta_sd = s.prior_log_theta_sd;
  m.prior_sigma_w_scale = s.prior_sigma_w_scale;
  validate(m);
  return m;
}

inline SamplerConfig sampler_config(const FitSettings& s) {
  SamplerConfig c;
  c.n_iterations = s.iterations;
  c.n_burnin = s.burnin;
  c.thin = s.thin;
  c.seed = s.seed;
  c.block_scales[Block::beta1] = s.scale_beta1;
  c.block_scales[Block::beta2] = s.scale_beta2;
  c.block_scales[Block::theta] = s.scale_theta;
  c.block_scales[Block::delta] = s.scale_delta;
  c.block_scales[Block::sigma_w] = s.scale_sigma_w;
  c.target_acceptance_vector = s.target_vector;
  c.target_acceptance_scalar = s.target_scalar;
  c.adapt_window = s.adapt_window;
  c.adapt_covariance = s.adapt_covariance;
  c.threads = s.threads;
  c.store_z = false;
  validate(c);
  return c;
}

inline json settings_json(const FitSettings& s) {
  return json{{"counts", s.counts},
              {"covariates", s.covariates},
              {"adjacency", s.adjacency},
              {"out", s.out},
              {"family", s.family},
              {"spatial", s.spatial},
              {"q", s.q},
              {"prior_beta_sd", s.prior_beta_sd},
              {"prior_log_theta_sd", s.prior_log_theta_sd},
              {"prior_sigma_w_scale", s.prior_sigma_w_scale},
              {"iterations", s.iterations},
              {"burnin", s.burnin},
              {"thin", s.thin},
              {"seed", s.seed},
              {"scale_beta1", s.scale_beta1},
              {"scale_beta2", s.scale_beta2},
              {"scale_theta", s.scale_theta},
              {"scale_delta", s.scale_delta},
              {"scale_sigma_w", s.scale_sigma_w},
              {"target_vector", s.target_vector},
              {"target_scalar", s.target_scalar},
              {"adapt_window", s.adapt_window},
              {"adapt_covariance", s.adapt_covariance},
              {"chains", s.chains},
              {"threads", s.threads},
              {"eigen_solver", s.eigen_solver},
              {"level", s.level}};
}

/// Graph over the dataset's counties. Edges naming counties absent from the
/// data are skipped (and counted); counties without edges stay isolated.
inline AdjacencyGraph dataset_graph(const std::string& adjacency_path, const Dataset& d, std::size_t* skipped) {
  const std::vector<EdgeRecord> edges = read_adjacency_file(adjacency_path);
  std::vector<std::string> sorted = d.county_ids;
  std::sort(sorted.begin(), sorted.end());
  auto known = [&](const std::string& id) { return std::binary_search(sorted.begin(), sorted.end(), id); };
  std::vector<EdgeRecord> kept;
  std::size_t n_skipped = 0;
  for (const auto& e : edges) {
    if (known(e.a) && known(e.b))
      kept.push_back(e);
    else
      ++n_skipped;
  }
  if (skipped) *skipped = n_skipped;
  if (kept.empty()) throw InputError(adjacency_path + ": no edges between counties present in the data");
  return build_graph(kept, d.county_ids);
}

struct FitResult {
  Dataset dataset;
  std::optional<MoranBasis> basis;
  DrawTable draws;
  Eigen::MatrixXd pointwise;
  FitSummary summary;
  WaicResult waic;
  std::vector<std::string> warnings;
  json run;
};

/// Full `fit` pipeline: load, basis, chains, summaries, artifacts in s.out.
inline FitResult run_fit(const FitSettings& s) {
  const auto start = std::chrono::steady_clock::now();
  if (s.counts.empty() || s.covariates.empty()) throw InputError("fit: counts and covariates paths are required");
  if (s.out.empty()) throw InputError("fit: output directory is required");
  if (s.chains < 1) throw InputError("fit: chains must be at least 1");
  if (!(s.level > 0.0 && s.level < 1.0)) throw InputError("fit: level must lie in (0, 1)");
  const ModelSpec spec = model_spec(s);
  const SamplerConfig config = sampler_config(s);

  FitResult r;
  LoadedDataset loaded = load_dataset(s.counts, s.covariates);
  r.dataset = std::move(loaded.dataset);
  const Dataset& d = r.dataset;
  if (loaded.report.dropped_missing > 0)
    r.warnings.push_back(std::to_string(loaded.report.dropped_missing) + " rows dropped for missing values");
  if (loaded.report.unmatched_counts + loaded.report.unmatched_covariates > 0)
    r.warnings.push_back(std::to_string(loaded.report.unmatched_counts) + " count rows and " +
                         std::to_string(loaded.report.unmatched_covariates) + " covariate rows had no partner");

  if (spec.spatial) {
    if (s.adjacency.empty()) throw InputError("fit: spatial model requires an adjacency file");
    std::size_t skipped = 0;
    const AdjacencyGraph g = dataset_graph(s.adjacency, d, &skipped);
    if (skipped > 0)
      r.warnings.push_back(std::to_string(skipped) + " adjacency edges reference counties absent from the data");
    BasisOptions opt;
    opt.solver = parse_solver(s.eigen_solver);
    const int q = spec.q > 0 ? spec.q : default_basis_rank(g.n_counties());
    r.basis = compute_basis(g, q, opt);
    for (const auto& w : r.basis->warnings) r.warnings.push_back(w);
  }
  const MoranBasis* basis = r.basis ? &*r.basis : nullptr;

  const std::vector<PosteriorSamples> chains = run_chains(spec, d, basis, config, s.chains);
  const ParameterLayout layout = ParameterLayout::make(spec, d, basis);
  r.draws = make_draw_table(chains, layout);
  r.pointwise = stack_pointwise(chains);
  r.summary = summarize(r.draws, &d, basis, s.level);
  r.waic = waic(r.pointwise);

  ClampStats clamps;
  json chain_info = json::array();
  for (std::size_t c = 0; c < chains.size(); ++c) {
    clamps += chains[c].clamps;
    for (const auto& w : chains[c].warnings) r.warnings.push_back("chain " + std::to_string(c + 1) + ": " + w);
    json rates = json::object();
    for (const auto& [name, rate] : chains[c].acceptance_rates) rates[name] = rate;
    json scales = json::object();
    for (Block b : kAllBlocks)
      if (block_active(b, spec)) scales[to_string(b)] = chains[c].final_scales[b];
    chain_info.push_back({{"seed", chains[c].config.seed}, {"acceptance_rates", rates}, {"final_scales", scales}});
  }
  json rhat = json::object();
  for (const auto& p : r.summary.parameters) {
    if (p.rhat && !p.rhat_flagged) {
      rhat[p.name] = *p.rhat;
      if (*p.rhat > 1.1) r.warnings.push_back("R-hat " + format_real(*p.rhat) + " > 1.1 for " + p.name);
    } else {
      rhat[p.name] = nullptr;
    }
  }
  if (clamps.pi + clamps.mu > 0)
    r.warnings.push_back("probability or mean clamped " + std::to_string(clamps.pi + clamps.mu) + " times");

  fs::create_directories(s.out);
  const fs::path out(s.out);
  io::write_draws((out / "draws.bin").string(), r.draws);
  io::write_pointwise((out / "pointwise_loglik.bin").string(), r.pointwise, chains.size(), io::unit_labels(d));
  if (basis) io::write_basis((out / "basis.bin").string(), *basis, d.county_ids);
  io::write_summary_csv((out / "summary.csv").string(), r.summary);
  io::write_unit_estimates_csv((out / "unit_estimates.csv").string(), r.summary);

  std::size_t zeros = 0;
  for (auto y : d.y) zeros += y == 0;
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  r.run = json{{"config", settings_json(s)},
               {"seed", s.seed},
               {"model",
                {{"family", to_string(spec.count_family)}, {"spatial", spec.spatial}, {"q", basis ? basis->q() : 0}}},
               {"data",
                {{"n_units", d.n_units()},
                 {"n_counties", d.n_counties()},
                 {"n_years", d.n_years()},
                 {"zero_fraction", static_cast<double>(zeros) / static_cast<double>(d.n_units())},
                 {"dropped_missing", loaded.report.dropped_missing},
                 {"unmatched_counts", loaded.report.unmatched_counts},
                 {"unmatched_covariates", loaded.report.unmatched_covariates}}},
               {"chains", chain_info},
               {"rhat", rhat},
               {"waic", {{"waic", r.waic.waic}, {"se", r.waic.se}, {"p_waic", r.waic.p_waic}, {"lppd", r.waic.lppd}}},
               {"clamps", {{"pi", clamps.pi}, {"mu", clamps.mu}}},
               {"warnings", r.warnings},
               {"wall_time_seconds", wall}};
  std::ofstream(out / "run.json") << std::setw(2) << r.run << "\n";
  return r;
}

/// Model spec and (optional) basis recorded by a previous fit.
struct FitArtifacts {
  ModelSpec spec;
  DrawTable draws;
  std::optional<MoranBasis> basis;
  std::vector<std::string> basis_ids;
  std::uint64_t seed = 1;
};

inline json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw InputError("cannot open '" + p.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InputError(p.string() + ": " + e.what());
  }
}

inline FitArtifacts read_fit(const fs::path& dir) {
  FitArtifacts a;
  const json run = read_json(dir / "run.json");
  try {
    a.spec.count_family = parse_count_family(run.at("model").at("family").get<std::string>());
    a.spec.spatial = run.at("model").at("spatial").get<bool>();
    a.seed = run.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw InputError((dir / "run.json").string() + ": " + e.what());
  }
  a.draws = io::read_draws((dir / "draws.bin").string());
  if (a.spec.spatial) {
    a.basis = io::read_basis((dir / "basis.bin").string(), &a.basis_ids);
    a.spec.q = a.basis->q();
  }
  return a;
}

/// Basis ids must list the dataset's counties in the same order.
inline void check_basis_matches(const std::vector<std::string>& basis_ids, const Dataset& d) {
  if (basis_ids != d.county_ids) throw InputError("basis counties do not match the dataset counties");
}

inline fs::path loglik_path(const std::string& p) {
  const fs::path path(p);
  return fs::is_directory(path) ? path / "pointwise_loglik.bin" : path;
}

inline std::string model_name(const std::string& p) {
  fs::path path = fs::path(p).lexically_normal();
  if (!fs::is_directory(path)) path = path.parent_path();
  std::string name = path.filename().string();
  if (name.empty()) name = path.parent_path().filename().string();
  return name.empty() ? p : name;
}

inline std::string describe(const WaicResult& w) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << w.waic << " (SE " << w.se << ", p_waic " << w.p_waic << ")";
  return os.str();
}

inline WaicComparison run_compare(const std::string& fit_a, const std::string& fit_b, const std::string& name_a,
                                  const std::string& name_b) {
  std::vector<std::string> labels_a, labels_b;
  const Eigen::MatrixXd a = io::read_pointwise(loglik_path(fit_a).string(), &labels_a);
  const Eigen::MatrixXd b = io::read_pointwise(loglik_path(fit_b).string(), &labels_b);
  WaicComparison c = compare_waic(a, b, name_a, name_b);
  if (labels_a != labels_b) throw InputError("the two fits cover different units");
  return c;
}

struct DiagnoseResult {
  RqrResult rqr;
  KsResult ks;
  json report;
};

inline DiagnoseResult run_diagnose(const std::string& fit_dir, const std::string& data_dir, const std::string& out_dir,
                                   RqrMode mode, std::optional<std::uint64_t> seed) {
  const FitArtifacts fit = read_fit(fit_dir);
  const Dataset d = load_dataset_dir(data_dir).dataset;
  std::vector<std::string> labels;
  io::read_pointwise(loglik_path(fit_dir).string(), &labels);
  if (labels != io::unit_labels(d))
    throw InputError("dataset units (" + std::to_string(d.n_units()) + ") do not match the fit (" +
                     std::to_string(labels.size()) + ")");
  if (fit.basis) check_basis_matches(fit.basis_ids, d);
  CounterRng rng = CounterRng::stream(seed.value_or(fit.seed), 0x525152ULL);
  DiagnoseResult r;
  r.rqr = rqr(fit.spec, d, fit.draws, fit.basis ? &*fit.basis : nullptr, rng, mode);
  r.ks = ks_test_normal(r.rqr.residuals);

  fs::create_directories(out_dir);
  const fs::path out(out_dir);
  {
    std::ofstream f(out / "rqr.csv");
    if (!f) throw InputError("cannot write '" + (out / "rqr.csv").string() + "'");
    f << "county_id,year,y,u,residual\n";
    for (std::size_t i = 0; i < d.n_units(); ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      f << io::quote_if_needed(d.county_ids[static_cast<std::size_t>(d.county_index[i])]) << ','
        << d.years[static_cast<std::size_t>(d.year_index[i])] << ',' << d.y[i] << ',' << io::format_real(r.rqr.u[k])
        << ',' << io::format_real(r.rqr.residuals[k]) << "\n";
    }
  }
  {
    std::ofstream f(out / "qq.csv");
    if (!f) throw InputError("cannot write '" + (out / "qq.csv").string() + "'");
    f << "theoretical,sample\n";
    for (auto [t, s] : qq_pairs(r.rqr.residuals)) f << io::format_real(t) << ',' << io::format_real(s) << "\n";
  }
  r.report = json{{"n_units", d.n_units()},
                  {"mode", mode == RqrMode::posterior_mean ? "posterior-mean" : "per-draw"},
                  {"ks_statistic", r.ks.statistic},
                  {"ks_p_value", r.ks.p_value},
                  {"n_clamped", r.rqr.n_clamped}};
  std::ofstream(out / "diagnose.json") << std::setw(2) << r.report << "\n";
  return r;
}

/// summary.csv from a draws file, plus unit_estimates.csv when data is given.
inline FitSummary run_summarize(const std::string& draws_path, const std::string& data_dir,
                                const std::string& basis_path, const std::string& out_dir, double level) {
  const DrawTable draws = io::read_draws(draws_path);
  FitSummary s;
  if (data_dir.empty()) {
    s = summarize(draws, nullptr, nullptr, level);
  } else {
    const Dataset d = load_dataset_dir(data_dir).dataset;
    const ParameterLayout layout = ParameterLayout::from_names(draws.names);
    std::optional<MoranBasis> basis;
    if (layout.spatial()) {
      if (basis_path.empty()) throw InputError("summarize: spatial draws need a basis file");
      std::vector<std::string> ids;
      basis = io::read_basis(basis_path, &ids);
      check_basis_matches(ids, d);
    }
    s = summarize(draws, &d, basis ? &*basis : nullptr, level);
  }
  fs::create_directories(out_dir);
  io::write_summary_csv((fs::path(out_dir) / "summary.csv").string(), s);
  if (!data_dir.empty()) io::write_unit_estimates_csv((fs::path(out_dir) / "unit_estimates.csv").string(), s);
  return s;
}

/// Scenario settings as read by `simulate` (strings for enum-like keys).
struct ScenarioSettings {
  SimulationScenario scenario;
  std::string adjacency;
  std::string spatial_mode = "none";
  std::vector<double> beta1;
  std::vector<double> beta2;
  std::string out;
};

inline SimulatedData run_simulate(ScenarioSettings st) {
  if (st.out.empty()) throw InputError("simulate: output directory is required");
  SimulationScenario& sc = st.scenario;
  if (st.spatial_mode == "none")
    sc.spatial_mode = SpatialMode::none;
  else if (st.spatial_mode == "moran")
    sc.spatial_mode = SpatialMode::moran;
  else
    throw InputError("spatial_mode must be none or moran, got '" + st.spatial_mode + "'");
  if (!st.beta1.empty()) sc.beta1 = Eigen::Map<const Eigen::VectorXd>(st.beta1.data(), static_cast<Eigen::Index>(st.beta1.size()));
  if (!st.beta2.empty()) sc.beta2 = Eigen::Map<const Eigen::VectorXd>(st.beta2.data(), static_cast<Eigen::Index>(st.beta2.size()));
  if (!st.adjacency.empty()) sc.edges = read_adjacency_file(st.adjacency);
  SimulatedData sim = simulate_dataset(sc);
  fs::create_directories(st.out);
  const fs::path out(st.out);
  io::write_counts_csv((out / "counts.csv").string(), sim.dataset);
  io::write_covariates_csv((out / "covariates.csv").string(), sim.dataset);
  io::write_adjacency((out / "adjacency.txt").string(), sim.truth.graph);
  io::write_truth_csv((out / "truth.csv").string(), sim.dataset, sim.truth);
  io::write_truth_parameters((out / "truth_parameters.csv").string(), sim.dataset, sim.truth);
  return sim;
}

namespace detail {

inline void add_fit_options(CLI::App& fit, FitSettings& s) {
  fit.add_option("--config", "INI file of key = value lines; keys are the long option names below");
  fit.add_option("--counts", s.counts, "counts.csv: county_id,year,y[,population]");
  fit.add_option("--covariates", s.covariates, "covariates.csv: county_id,year,<name>...");
  fit.add_option("--adjacency", s.adjacency, "adjacency file of county_id_a,county_id_b pairs");
  fit.add_option("--out", s.out, "output directory");
  fit.add_option("--family", s.family, "count family: negative-binomial or poisson")->capture_default_str();
  fit.add_option("--spatial", s.spatial, "Moran-basis spatial effects: on or off")->capture_default_str();
  fit.add_option("--q", s.q, "basis rank; 0 selects min(100, n_counties / 10)")->capture_default_str();
  fit.add_option("--prior_beta_sd", s.prior_beta_sd, "sd of the normal prior on each coefficient")->capture_default_str();
  fit.add_option("--prior_log_theta_sd", s.prior_log_theta_sd, "sd of the normal prior on log theta")->capture_default_str();
  fit.add_option("--prior_sigma_w_scale", s.prior_sigma_w_scale, "scale of the half-normal prior on sigma_w")->capture_default_str();
  fit.add_option("--iterations", s.iterations, "MCMC iterations per chain, burn-in included")->capture_default_str();
  fit.add_option("--burnin", s.burnin, "burn-in iterations (proposal tuning happens here)")->capture_default_str();
  fit.add_option("--thin", s.thin, "keep every thin-th post-burn-in iteration")->capture_default_str();
  fit.add_option("--seed", s.seed, "base random seed")->capture_default_str();
  fit.add_option("--scale_beta1", s.scale_beta1, "initial proposal sd, detection coefficients")->capture_default_str();
  fit.add_option("--scale_beta2", s.scale_beta2, "initial proposal sd, count coefficients")->capture_default_str();
  fit.add_option("--scale_theta", s.scale_theta, "initial proposal sd, log theta")->capture_default_str();
  fit.add_option("--scale_delta", s.scale_delta, "initial proposal sd, basis coefficients")->capture_default_str();
  fit.add_option("--scale_sigma_w", s.scale_sigma_w, "initial proposal sd, log sigma_w")->capture_default_str();
  fit.add_option("--target_vector", s.target_vector, "target acceptance rate, vector blocks")->capture_default_str();
  fit.add_option("--target_scalar", s.target_scalar, "target acceptance rate, scalar blocks")->capture_default_str();
  fit.add_option("--adapt_window", s.adapt_window, "iterations between scale adaptations")->capture_default_str();
  fit.add_option("--adapt_covariance", s.adapt_covariance, "shape vector proposals by the burn-in covariance")->capture_default_str();
  fit.add_option("--chains", s.chains, "independent chains, one worker each")->capture_default_str();
  fit.add_option("--threads", s.threads, "likelihood worker threads per chain")->capture_default_str();
  fit.add_option("--eigen_solver", s.eigen_solver, "auto, dense or lanczos")->capture_default_str();
  fit.add_option("--level", s.level, "credible level of the HPD intervals")->capture_default_str();
}

inline void add_scenario_options(CLI::App& sim, ScenarioSettings& st) {
  SimulationScenario& sc = st.scenario;
  sim.add_option("--scenario", "INI file of key = value lines; keys are the long option names below");
  sim.add_option("--out", st.out, "output directory");
  sim.add_option("--rows", sc.rows, "lattice rows")->capture_default_str();
  sim.add_option("--cols", sc.cols, "lattice columns")->capture_default_str();
  sim.add_option("--adjacency", st.adjacency, "edge list replacing the lattice");
  sim.add_option("--n_years", sc.n_years, "years per county")->capture_default_str();
  sim.add_option("--first_year", sc.first_year, "first year label")->capture_default_str();
  sim.add_option("--n_covariates", sc.n_covariates, "standard-normal covariates")->capture_default_str();
  sim.add_option("--beta1", st.beta1, "detection coefficients, intercept first (default built in)");
  sim.add_option("--beta2", st.beta2, "count coefficients, intercept first (default built in)");
  sim.add_option("--theta", sc.theta, "negative binomial dispersion")->capture_default_str();
  sim.add_option("--spatial_mode", st.spatial_mode, "none or moran")->capture_default_str();
  sim.add_option("--q", sc.q, "basis rank; 0 selects the default")->capture_default_str();
  sim.add_option("--sigma_w", sc.sigma_w, "sd of the basis coefficients")->capture_default_str();
  sim.add_option("--population_min", sc.population_min, "smallest county population")->capture_default_str();
  sim.add_option("--population_max", sc.population_max, "largest county population")->capture_default_str();
  sim.add_option("--seed", sc.seed, "random seed")->capture_default_str();
}

/// Value of --flag (as "--flag v" or "--flag=v") among args[from..], if any.
inline std::optional<std::string> flag_value(const std::vector<std::string>& args, std::size_t from,
                                             const std::string& flag) {
  for (std::size_t i = from; i < args.size(); ++i) {
    if (args[i] == flag && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind(flag + "=", 0) == 0) return args[i].substr(flag.size() + 1);
  }
  return std::nullopt;
}

/// Splice the key = value lines of a subcommand's config file in as
/// "--key=value" arguments right after the subcommand name. Keys also given
/// on the command line are skipped, so flags take precedence.
inline std::vector<std::string> expand_config(std::vector<std::string> args) {
  const std::pair<const char*, const char*> commands[] = {{"fit", "--config"}, {"simulate", "--scenario"}};
  for (std::size_t pos = 0; pos < args.size(); ++pos) {
    for (auto [cmd, flag] : commands) {
      if (args[pos] != cmd) continue;
      const auto path = flag_value(args, pos + 1, flag);
      if (!path) return args;
      std::vector<CLI::ConfigItem> items;
      try {
        items = CLI::ConfigINI().from_file(*path);
      } catch (const CLI::Error& e) {
        throw InputError(*path + ": " + e.what());
      }
      std::vector<std::string> extra;
      for (const auto& item : items) {
        if (!item.parents.empty()) throw InputError(*path + ": sections are not supported ('" + item.parents.front() + "')");
        const std::string key = "--" + item.name;
        if (key == flag) continue;
        if (flag_value(args, pos + 1, key) ||
            std::find(args.begin() + static_cast<std::ptrdiff_t>(pos) + 1, args.end(), key) != args.end())
          continue;
        if (item.inputs.empty()) extra.push_back(key);
        for (const auto& v : item.inputs) extra.push_back(key + "=" + v);
      }
      args.insert(args.begin() + static_cast<std::ptrdiff_t>(pos) + 1, extra.begin(), extra.end());
      return args;
    }
  }
  return args;
}

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NumericalError*>(&e) || dynamic_cast<const DomainError*>(&e)) return kExitNumerical;
  return kExitInput;
}

} // namespace detail

/// Entry point shared by the executable and the tests. args excludes the
/// program name.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Zero-inflated count models with Moran-basis spatial effects"};
  app.name("zinbsf");
  app.require_subcommand(1);

  FitSettings fit_settings;
  CLI::App* fit = app.add_subcommand("fit", "fit a model and write summaries, draws and run.json");
  detail::add_fit_options(*fit, fit_settings);

  std::string fit_a, fit_b, name_a, name_b, compare_out;
  CLI::App* compare = app.add_subcommand("compare", "compare two fits by WAIC");
  compare->add_option("--fit-a", fit_a, "fit directory or pointwise_loglik.bin")->required();
  compare->add_option("--fit-b", fit_b, "fit directory or pointwise_loglik.bin")->required();
  compare->add_option("--name-a", name_a, "label for the first model (default: directory name)");
  compare->add_option("--name-b", name_b, "label for the second model (default: directory name)");
  compare->add_option("--out", compare_out, "also write the comparison as JSON to this file");

  ScenarioSettings scenario;
  CLI::App* simulate = app.add_subcommand("simulate", "simulate a dataset with known truth");
  detail::add_scenario_options(*simulate, scenario);

  std::string diag_fit, diag_data, diag_out, diag_mode = "posterior-mean";
  std::optional<std::uint64_t> diag_seed;
  CLI::App* diagnose = app.add_subcommand("diagnose", "randomized quantile residuals and QQ pairs");
  diagnose->add_option("--fit", diag_fit, "fit directory")->required();
  diagnose->add_option("--data", diag_data, "directory with counts.csv and covariates.csv")->required();
  diagnose->add_option("--out", diag_out, "output directory (default: the fit directory)");
  diagnose->add_option("--mode", diag_mode, "posterior-mean or per-draw")->capture_default_str();
  diagnose->add_option("--seed", diag_seed, "seed for the residual randomization (default: the fit seed)");

  std::string sum_fit, sum_draws, sum_data, sum_basis, sum_out;
  double sum_level = 0.95;
  CLI::App* summarize_cmd = app.add_subcommand("summarize", "summaries recomputed from stored draws");
  summarize_cmd->add_option("--fit", sum_fit, "fit directory (draws.bin and basis.bin)");
  summarize_cmd->add_option("--draws", sum_draws, "draws.bin");
  summarize_cmd->add_option("--basis", sum_basis, "basis.bin, for spatial unit estimates");
  summarize_cmd->add_option("--data", sum_data, "directory with counts.csv and covariates.csv, for unit estimates");
  summarize_cmd->add_option("--out", sum_out, "output directory")->required();
  summarize_cmd->add_option("--level", sum_level, "credible level")->capture_default_str();

  std::vector<std::string> argv_store{"zinbsf"};
  try {
    const std::vector<std::string> expanded = detail::expand_config(args);
    argv_store.insert(argv_store.end(), expanded.begin(), expanded.end());
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (fit->parsed()) {
      const FitResult r = run_fit(fit_settings);
      out << "fit: " << r.dataset.n_units() << " units, " << r.draws.total_draws() << " draws in "
          << r.draws.n_chains() << " chains; WAIC " << describe(r.waic) << "\n";
      for (const auto& w : r.warnings) out << "warning: " << w << "\n";
    } else if (compare->parsed()) {
      const std::string a = name_a.empty() ? model_name(fit_a) : name_a;
      std::string b = name_b.empty() ? model_name(fit_b) : name_b;
      if (b == a) b += " (b)";
      const WaicComparison c = run_compare(fit_a, fit_b, a, b);
      out << a << ": WAIC " << describe(c.a) << "\n";
      out << b << ": WAIC " << describe(c.b) << "\n";
      out << std::fixed << std::setprecision(2) << "difference (" << a << " - " << b << "): " << c.difference
          << " (SE " << c.se_difference << ")\n";
      out << "verdict: " << c.verdict << "\n";
      if (!compare_out.empty()) {
        const json j{{"a", {{"name", a}, {"waic", c.a.waic}, {"se", c.a.se}, {"p_waic", c.a.p_waic}}},
                     {"b", {{"name", b}, {"waic", c.b.waic}, {"se", c.b.se}, {"p_waic", c.b.p_waic}}},
                     {"difference", c.difference},
                     {"se_difference", c.se_difference},
                     {"verdict", c.verdict}};
        std::ofstream(compare_out) << std::setw(2) << j << "\n";
      }
    } else if (simulate->parsed()) {
      const SimulatedData sim = run_simulate(scenario);
      std::size_t zeros = 0;
      for (auto y : sim.dataset.y) zeros += y == 0;
      out << "simulate: " << sim.dataset.n_units() << " units, zero fraction " << std::fixed << std::setprecision(4)
          << static_cast<double>(zeros) / static_cast<double>(sim.dataset.n_units()) << "\n";
    } else if (diagnose->parsed()) {
      RqrMode mode;
      if (diag_mode == "posterior-mean")
        mode = RqrMode::posterior_mean;
      else if (diag_mode == "per-draw")
        mode = RqrMode::per_draw;
      else
        throw InputError("mode must be posterior-mean or per-draw");
      const DiagnoseResult r = run_diagnose(diag_fit, diag_data, diag_out.empty() ? diag_fit : diag_out, mode, diag_seed);
      out << "diagnose: KS statistic " << io::format_real(r.ks.statistic) << ", p-value "
          << io::format_real(r.ks.p_value) << ", clamped residuals " << r.rqr.n_clamped << "\n";
    } else if (summarize_cmd->parsed()) {
      if (sum_fit.empty() == sum_draws.empty()) throw InputError("summarize: give exactly one of --fit or --draws");
      std::string draws = sum_draws, basis = sum_basis;
      if (!sum_fit.empty()) {
        draws = (fs::path(sum_fit) / "draws.bin").string();
        if (basis.empty() && fs::exists(fs::path(sum_fit) / "basis.bin")) basis = (fs::path(sum_fit) / "basis.bin").string();
      }
      const FitSummary s = run_summarize(draws, sum_data, basis, sum_out, sum_level);
      out << "summarize: " << s.parameters.size() << " parameters, " << s.units.size() << " units\n";
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return detail::exit_code_for(e);
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitOk;
}

} // namespace zinbsf::cli
