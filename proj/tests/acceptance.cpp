// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails. Pass criterion names (AC1 ... AC8) as
// arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "basis_check.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "zinbsf/io/cli.hpp"
#include "zinbsf/zinbsf.hpp"

using namespace zinbsf;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Largest |waic - (-2 lppd + 2 p_waic)| over every fit made in this run.
double g_identity_worst = 0.0;
int g_identity_fits = 0;

WaicResult checked_waic(const Eigen::MatrixXd& ll) {
  const WaicResult w = waic(ll);
  g_identity_worst = std::max(g_identity_worst, std::abs(w.waic - (-2.0 * w.lppd + 2.0 * w.p_waic)));
  ++g_identity_fits;
  return w;
}

struct Fit {
  DrawTable draws;
  Eigen::MatrixXd pointwise;
};

Fit fit_model(const ModelSpec& spec, const Dataset& d, const MoranBasis* basis, const SamplerConfig& config,
              int n_chains) {
  const auto chains = run_chains(spec, d, basis, config, n_chains);
  Fit f;
  f.draws = make_draw_table(chains, ParameterLayout::make(spec, d, basis));
  f.pointwise = stack_pointwise(chains);
  return f;
}

SamplerConfig sampler(int iterations, int burnin, int thin, std::uint64_t seed) {
  SamplerConfig c;
  c.n_iterations = iterations;
  c.n_burnin = burnin;
  c.thin = thin;
  c.seed = seed;
  c.store_z = false;
  return c;
}

double zero_fraction(const Dataset& d) {
  double z = 0.0;
  for (auto y : d.y) z += y == 0;
  return z / static_cast<double>(d.n_units());
}

// ---------------------------------------------------------------------------
// AC1: ZINB log-pmf and CDF against brute-force summation over a 200-point grid.

Outcome ac1() {
  const double mus[] = {0.05, 0.7, 3.0, 15.0, 80.0};
  const double thetas[] = {0.1, 0.6, 2.0, 10.0, 200.0};
  const double pis[] = {1e-6, 0.05, 0.2, 0.4, 0.6, 0.8, 0.95, 1.0 - 1e-6};
  double worst_log = 0.0, worst_cdf = 0.0, worst_norm = 0.0;
  int points = 0;
  for (double mu : mus)
    for (double theta : thetas) {
      // extend the oracle table until the remaining tail is below 1e-13
      std::int64_t y_max = 64;
      std::vector<double> nb;
      for (;; y_max *= 2) {
        nb = oracle::nb_pmf_table(y_max, mu, theta);
        if (1.0 - oracle::cumulative(nb).back() < 1e-13 || y_max > (1 << 22)) break;
      }
      for (double pi : pis) {
        ++points;
        const auto pmf = oracle::zi_table(nb, pi);
        const auto cdf = oracle::cumulative(pmf);
        std::vector<std::int64_t> ys;
        for (std::int64_t y = 0; y <= std::min<std::int64_t>(y_max, 60); ++y) ys.push_back(y);
        for (std::int64_t y : {100, 250, 500, 1000, 5000})
          if (y <= y_max) ys.push_back(y);
        for (std::int64_t y : ys) {
          const auto k = static_cast<std::size_t>(y);
          if (pmf[k] > 1e-300) worst_log = std::max(worst_log, std::abs(zinb_logpmf(y, pi, mu, theta) - std::log(pmf[k])));
          worst_cdf = std::max(worst_cdf, std::abs(zinb_cdf(y, pi, mu, theta) - cdf[k]));
        }
        double total = 0.0;
        for (std::int64_t y = 0; y <= y_max; ++y) total += std::exp(zinb_logpmf(y, pi, mu, theta));
        worst_norm = std::max(worst_norm, std::abs(total - 1.0));
      }
    }
  const bool pass = points == 200 && worst_log <= 1e-10 && worst_cdf <= 1e-10 && worst_norm <= 1e-8;
  return {pass, fmt("%d grid points; max |log pmf err| %.2e, max |cdf err| %.2e (tol 1e-10); max |sum - 1| %.2e (tol 1e-8)",
                    points, worst_log, worst_cdf, worst_norm)};
}

// ---------------------------------------------------------------------------
// AC2: Moran basis against cyclic Jacobi on the explicit P A P matrix.

Outcome ac2() {
  double worst = 0.0, worst_ortho = 0.0, worst_mean = 0.0, worst_lanczos = 0.0;
  int graphs = 0;
  auto check = [&](int n, const std::vector<std::pair<int, int>>& edges, int q) {
    const AdjacencyGraph g = graph_from_index_pairs(basis_check::ids(n), edges);
    const auto ref = oracle::jacobi_eigen(oracle::moran_matrix(n, edges));
    BasisOptions dense, lanczos;
    dense.solver = EigenSolverKind::dense;
    lanczos.solver = EigenSolverKind::lanczos;
    for (const auto& opt : {dense, lanczos}) {
      const MoranBasis b = compute_basis(g, q, opt);
      double& slot = opt.solver == EigenSolverKind::dense ? worst : worst_lanczos;
      slot = std::max(slot, basis_check::max_deviation(b, ref));
      const auto [ortho, mean] = basis_check::orthonormality(b);
      worst_ortho = std::max(worst_ortho, ortho);
      worst_mean = std::max(worst_mean, mean);
    }
    ++graphs;
  };
  std::vector<std::pair<int, int>> lattice;
  for (int r = 0; r < 10; ++r)
    for (int c = 0; c < 10; ++c) {
      if (c + 1 < 10) lattice.emplace_back(r * 10 + c, r * 10 + c + 1);
      if (r + 1 < 10) lattice.emplace_back(r * 10 + c, (r + 1) * 10 + c);
    }
  check(100, lattice, 30);
  for (const auto& [n, edges] : basis_check::random_graphs(2024, 5, 300)) check(n, edges, std::max(10, n / 10));

  const MoranBasis two = compute_basis(
      graph_from_index_pairs(basis_check::ids(4), std::vector<std::pair<int, int>>{{0, 1}, {2, 3}}), 1);
  Eigen::Vector4d expected(0.5, 0.5, -0.5, -0.5);
  if (two.vectors(0, 0) < 0) expected = -expected;
  const double two_err = std::max(std::abs(two.eigenvalues[0] - 1.0), (two.vectors.col(0) - expected).cwiseAbs().maxCoeff());

  const bool pass = graphs == 6 && worst <= 1e-8 && worst_lanczos <= 1e-8 && worst_ortho <= 1e-8 &&
                    worst_mean <= 1e-8 && two_err <= 1e-8;
  return {pass, fmt("%d graphs; max eigenpair dev dense %.2e, lanczos %.2e (tol 1e-8); |M'M - I| %.2e, |col mean| "
                    "%.2e; two-edge graph err %.2e",
                    graphs, worst, worst_lanczos, worst_ortho, worst_mean, two_err)};
}

// ---------------------------------------------------------------------------
// AC3: Gibbs z updates plus Metropolis moves on a two-point theta grid,
// against exact enumeration of (theta, z).

Outcome ac3() {
  Dataset d;
  d.county_ids = {"a", "b", "c"};
  d.years = {2000};
  d.covariate_names = {"intercept", "x"};
  d.y = {0, 0, 4};
  d.county_index = {0, 1, 2};
  d.year_index = {0, 0, 0};
  d.design.resize(3, 2);
  d.design << 1, -1, 1, 0, 1, 1;
  validate(d);
  const ModelSpec spec;
  const double grid[2] = {0.5, 3.0};

  ParameterState s;
  s.beta1 = Eigen::Vector2d(0.3, 0.8);
  s.beta2 = Eigen::Vector2d(1.0, 0.4);
  s.theta = grid[0];
  s.z = {1, 1, 1};

  // exact joint over (grid index, z0, z1); z2 = 1 because y2 > 0
  std::map<int, double> exact;
  double norm = 0.0;
  for (int g = 0; g < 2; ++g) {
    const double theta = grid[g];
    const double lt = std::log(theta);
    const double prior = std::exp(-0.5 * (lt / 2.0) * (lt / 2.0));
    for (int mask = 0; mask < 4; ++mask) {
      double w = prior;
      for (int i = 0; i < 3; ++i) {
        const double eta1 = s.beta1[0] + s.beta1[1] * d.design(i, 1);
        const double pi = 1.0 / (1.0 + std::exp(-eta1));
        const double mu = std::exp(s.beta2[0] + s.beta2[1] * d.design(i, 1));
        const int z = i < 2 ? (mask >> i) & 1 : 1;
        const auto table = oracle::nb_pmf_table(d.y[static_cast<std::size_t>(i)], mu, theta);
        w *= z ? pi * table.back() : (1.0 - pi) * (d.y[static_cast<std::size_t>(i)] == 0);
      }
      exact[g * 4 + mask] = w;
      norm += w;
    }
  }
  for (auto& [k, v] : exact) v /= norm;

  constexpr int kIterations = 100000;
  CounterRng rng = CounterRng::stream(77, 3);
  std::map<int, double> freq;
  int g = 0;
  for (int it = 0; it < kIterations; ++it) {
    update_z(s, spec, d, nullptr, rng);
    ParameterState prop = s;
    prop.theta = grid[1 - g];
    const double lr = complete_data_loglik(prop, spec, d, nullptr) + log_prior(prop, spec) -
                      complete_data_loglik(s, spec, d, nullptr) - log_prior(s, spec);
    if (metropolis_accept(lr, rng)) {
      s = prop;
      g = 1 - g;
    }
    freq[g * 4 + s.z[0] + 2 * s.z[1]] += 1.0 / kIterations;
  }
  double tv = 0.0, marginal_exact = 0.0, marginal_mcmc = 0.0;
  for (const auto& [k, p] : exact) {
    tv += 0.5 * std::abs(p - freq[k]);
    if (k >= 4) {
      marginal_exact += p;
      marginal_mcmc += freq[k];
    }
  }
  return {tv < 0.02, fmt("TV over 8 (theta, z) states %.4f (tol 0.02) at %d iterations; P(theta=3) exact %.4f, mcmc %.4f",
                         tv, kIterations, marginal_exact, marginal_mcmc)};
}

// ---------------------------------------------------------------------------
// AC4: coverage of true coefficients over 20 replicate fits.

constexpr int kRecoveryReplicates = 20;

Outcome ac4() {
  int covered = 0, total = 0, theta_ok = 0;
  double zf_lo = 1.0, zf_hi = 0.0, worst_theta = 0.0, theta_mean_sum = 0.0, theta_true = 0.0;
  for (int r = 0; r < kRecoveryReplicates; ++r) {
    SimulationScenario sc; // 20 x 25 lattice, 4 years, 5 covariates
    sc.seed = 5000 + static_cast<std::uint64_t>(r);
    const SimulatedData sim = simulate_dataset(sc);
    const double zf = zero_fraction(sim.dataset);
    zf_lo = std::min(zf_lo, zf);
    zf_hi = std::max(zf_hi, zf);
    const ModelSpec spec;
    const Fit f = fit_model(spec, sim.dataset, nullptr, sampler(12000, 4000, 4, 100 + r), 2);
    checked_waic(f.pointwise);
    const FitSummary fs = summarize(f.draws);
    const ParameterLayout layout = ParameterLayout::from_names(f.draws.names);
    const Eigen::VectorXd truth = layout.flatten(sim.truth.params);
    for (std::size_t j = 0; j < fs.parameters.size(); ++j) {
      const auto& p = fs.parameters[j];
      const double t = truth[static_cast<Eigen::Index>(j)];
      if (p.name == "theta") {
        theta_mean_sum += p.mean;
        theta_true = t;
        const double rel = std::abs(p.mean / t - 1.0);
        worst_theta = std::max(worst_theta, rel);
        theta_ok += rel <= 0.25;
        continue;
      }
      ++total;
      covered += p.hpd.lo <= t && t <= p.hpd.hi;
    }
  }
  const double coverage = static_cast<double>(covered) / total;
  // theta is judged on the posterior mean averaged over replicates, like the
  // pooled coverage; the per-fit count is reported alongside
  const double theta_avg = theta_mean_sum / kRecoveryReplicates;
  const double theta_rel = std::abs(theta_avg / theta_true - 1.0);
  const bool pass =
      zf_lo >= 0.6 && zf_hi <= 0.75 && coverage >= 0.85 && coverage <= 1.0 && theta_rel <= 0.25;
  return {pass, fmt("zero fraction [%.3f, %.3f] (need [0.6, 0.75]); beta HPD coverage %d/%d = %.3f (need [0.85, 1]); "
                    "theta posterior mean %.3f vs %.3f, off %.1f%% (need <= 25%%); per fit within 25%% in %d/%d, "
                    "worst %.1f%%",
                    zf_lo, zf_hi, covered, total, coverage, theta_avg, theta_true, 100.0 * theta_rel, theta_ok,
                    kRecoveryReplicates, 100.0 * worst_theta)};
}

// ---------------------------------------------------------------------------
// AC5: randomized quantile residuals separate a correct from a misspecified family.

Outcome ac5() {
  auto ks_for = [](CountFamily family, double theta, std::uint64_t seed, std::size_t* clamped) {
    // 1250 counties x 4 years = 5000 units
    SimulationScenario sc;
    sc.rows = 25;
    sc.cols = 50;
    sc.theta = theta;
    sc.seed = seed;
    const SimulatedData sim = simulate_dataset(sc);
    ModelSpec spec;
    spec.count_family = family;
    const Fit f = fit_model(spec, sim.dataset, nullptr, sampler(12000, 4000, 4, seed), 2);
    checked_waic(f.pointwise);
    CounterRng rng = CounterRng::stream(seed, 0x525152ULL);
    const RqrResult r = rqr(spec, sim.dataset, f.draws, nullptr, rng);
    *clamped = r.n_clamped;
    return ks_test_normal(r.residuals).p_value;
  };
  std::size_t clamp_nb = 0, clamp_pois = 0;
  const double p_nb = ks_for(CountFamily::negative_binomial, 1.5, 7001, &clamp_nb);
  const double p_pois = ks_for(CountFamily::poisson, 0.3, 7002, &clamp_pois);
  return {p_nb > 0.01 && p_pois < 0.01,
          fmt("NB fit to NB data: KS p %.4f (need > 0.01), %zu clamped; Poisson fit to theta=0.3 data: KS p %.2e "
              "(need < 0.01), %zu clamped",
              p_nb, clamp_nb, p_pois, clamp_pois)};
}

// ---------------------------------------------------------------------------
// AC6: WAIC comparison of spatial and non-spatial fits.

constexpr int kWaicReplicates = 20;

Outcome ac6() {
  auto experiment = [](double sigma_w, std::uint64_t base_seed, int* indistinguishable, int* spatial_wins) {
    for (int r = 0; r < kWaicReplicates; ++r) {
      SimulationScenario sc;
      sc.rows = 15;
      sc.cols = 15;
      sc.spatial_mode = SpatialMode::moran;
      sc.sigma_w = sigma_w;
      sc.seed = base_seed + static_cast<std::uint64_t>(r);
      const SimulatedData sim = simulate_dataset(sc);
      const MoranBasis& basis = *sim.truth.basis;
      ModelSpec plain, spatial;
      spatial.spatial = true;
      spatial.q = basis.q();
      const SamplerConfig cfg = sampler(8000, 3000, 5, sc.seed);
      const Fit a = fit_model(spatial, sim.dataset, &basis, cfg, 2);
      const Fit b = fit_model(plain, sim.dataset, nullptr, cfg, 2);
      checked_waic(a.pointwise);
      checked_waic(b.pointwise);
      const WaicComparison c = compare_waic(a.pointwise, b.pointwise, "spatial", "nonspatial");
      *indistinguishable += c.verdict == "indistinguishable";
      *spatial_wins += c.verdict == "spatial";
    }
  };
  int null_same = 0, null_spatial = 0, strong_same = 0, strong_spatial = 0;
  experiment(0.0, 8000, &null_same, &null_spatial);
  experiment(2.0, 9000, &strong_same, &strong_spatial);
  const bool pass = null_same >= 16 && strong_spatial >= 16;
  return {pass, fmt("sigma_w = 0: indistinguishable in %d/%d (need >= 16); sigma_w = 2: spatial wins in %d/%d (need >= 16)",
                    null_same, kWaicReplicates, strong_spatial, kWaicReplicates)};
}

// ---------------------------------------------------------------------------
// AC7: WAIC hand fixture and the lppd / p_waic identity.

Outcome ac7() {
  Eigen::MatrixXd ll(2, 1);
  ll << std::log(0.5), std::log(0.25);
  const WaicResult w = waic(ll);
  const double lppd = std::log(0.375);
  const double p = 0.5 * std::log(2.0) * std::log(2.0);
  const double err = std::max({std::abs(w.lppd - lppd), std::abs(w.p_waic - p), std::abs(w.waic - (-2.0 * lppd + 2.0 * p))});

  // a few fits of our own so the identity is checked even when run alone
  for (std::uint64_t seed : {1, 2}) {
    const auto sim = fixtures::small(8, 8, 3, 2, seed, SpatialMode::moran, 0.7);
    ModelSpec spec;
    spec.spatial = true;
    const Fit f = fit_model(spec, sim.dataset, &*sim.truth.basis, sampler(2000, 1000, 2, seed), 2);
    checked_waic(f.pointwise);
  }
  const bool pass = err <= 1e-12 && g_identity_worst <= 1e-9;
  return {pass, fmt("fixture err %.2e (tol 1e-12); identity max err %.2e over %d fits", err, g_identity_worst,
                    g_identity_fits)};
}

// ---------------------------------------------------------------------------
// AC8: byte-identical CLI outputs across runs and thread counts.

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome ac8() {
  const fs::path root = fixtures::temp_dir("acceptance_determinism");
  std::ostringstream sink;
  auto cli = [&](std::vector<std::string> args) { return cli::run(args, sink, sink); };
  if (cli({"simulate", "--out", (root / "data").string(), "--rows", "12", "--cols", "12", "--spatial_mode", "moran",
           "--sigma_w", "0.8", "--seed", "31"}) != 0)
    return {false, "simulate failed"};
  auto fit = [&](const std::string& name, const std::string& threads) {
    return cli({"fit", "--counts", (root / "data" / "counts.csv").string(), "--covariates",
                (root / "data" / "covariates.csv").string(), "--adjacency", (root / "data" / "adjacency.txt").string(),
                "--spatial", "on", "--out", (root / name).string(), "--iterations", "3000", "--burnin", "1000",
                "--thin", "2", "--chains", "2", "--seed", "2718", "--threads", threads});
  };
  if (fit("run1", "1") || fit("run2", "1") || fit("run4", "4")) return {false, "fit failed: " + sink.str()};
  int identical = 0, compared = 0;
  for (const char* file : {"draws.bin", "pointwise_loglik.bin", "summary.csv", "unit_estimates.csv"}) {
    const std::string a = slurp(root / "run1" / file);
    for (const char* other : {"run2", "run4"}) {
      ++compared;
      identical += !a.empty() && a == slurp(root / other / file);
    }
  }
  return {identical == compared,
          fmt("%d/%d artifact pairs byte-identical (draws, pointwise, summary, unit estimates; repeat run and 4 threads)",
              identical, compared)};
}

} // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"AC1", ac1}, {"AC2", ac2}, {"AC3", ac3}, {"AC4", ac4}, {"AC5", ac5}, {"AC6", ac6}, {"AC7", ac7}, {"AC8", ac8}};
  std::vector<std::string> selected(argv + 1, argv + argc);
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    if (!selected.empty() && std::find(selected.begin(), selected.end(), name) == selected.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %s  %s  [%.1f s]\n", name.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
