#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "zinbsf/core/model.hpp"
#include "zinbsf/core/parallel.hpp"
#include "zinbsf/errors.hpp"
#include "zinbsf/rng.hpp"

namespace zinbsf {

enum class Block { beta1 = 0, beta2 = 1, theta = 2, delta = 3, sigma_w = 4 };
inline constexpr std::array<Block, 5> kAllBlocks{Block::beta1, Block::beta2, Block::theta, Block::delta,
                                                 Block::sigma_w};

inline const char* to_string(Block b) {
  switch (b) {
  case Block::beta1: return "beta1";
  case Block::beta2: return "beta2";
  case Block::theta: return "theta";
  case Block::delta: return "delta";
  case Block::sigma_w: return "sigma_w";
  }
  return "?";
}

inline Block parse_block(const std::string& s) {
  for (Block b : kAllBlocks)
    if (s == to_string(b)) return b;
  throw InputError("unknown block id '" + s + "'");
}

inline bool block_active(Block b, const ModelSpec& spec) {
  switch (b) {
  case Block::theta: return spec.has_theta();
  case Block::delta:
  case Block::sigma_w: return spec.spatial;
  default: return true;
  }
}

/// Initial random-walk standard deviations (log scale for theta, sigma_w).
struct BlockScales {
  std::array<double, 5> value{0.05, 0.02, 0.1, 0.05, 0.3};
  double& operator[](Block b) { return value[static_cast<std::size_t>(b)]; }
  double operator[](Block b) const { return value[static_cast<std::size_t>(b)]; }
};

struct SamplerConfig {
  int n_iterations = 60000;
  int n_burnin = 20000;
  int thin = 10;
  std::uint64_t seed = 1;
  BlockScales block_scales;
  double target_acceptance_vector = 0.234;
  double target_acceptance_scalar = 0.44;
  int adapt_window = 50;
  /// Vector blocks switch to a proposal shaped by the burn-in covariance
  /// once 2 x adapt_window iterations have been seen.
  bool adapt_covariance = true;
  /// Worker threads for per-unit likelihood terms.
  int threads = 1;
  /// Keep latent indicators in every stored draw.
  bool store_z = true;
};

inline void validate(const SamplerConfig& c) {
  if (c.n_iterations <= 0 || c.n_burnin < 0 || c.thin < 1 || c.adapt_window < 1)
    throw InputError("iterations, thin and adapt_window must be positive and burn-in non-negative");
  if (c.n_burnin >= c.n_iterations) throw InputError("burn-in must be smaller than the number of iterations");
  for (double t : {c.target_acceptance_vector, c.target_acceptance_scalar})
    if (!(t > 0.0 && t < 1.0)) throw InputError("target acceptance must lie in (0, 1)");
  for (double s : c.block_scales.value)
    if (!(s >= 0.0) || !std::isfinite(s)) throw InputError("block scales must be finite and non-negative");
  if (c.threads < 1) throw InputError("threads must be at least 1");
}

struct PosteriorSamples {
  std::vector<ParameterState> draws;
  /// n_draws x n_units; row s is loglik_pointwise(draws[s]).
  Eigen::MatrixXd pointwise_loglik;
  /// Post-burn-in acceptance rate per active block.
  std::vector<std::pair<std::string, double>> acceptance_rates;
  /// Proposal scales after burn-in (frozen thereafter).
  BlockScales final_scales;
  SamplerConfig config;
  ClampStats clamps;
  std::vector<std::string> warnings;
};

/// Metropolis acceptance: true with probability min(1, exp(log_ratio)).
inline bool metropolis_accept(double log_ratio, CounterRng& rng) {
  if (std::isnan(log_ratio)) return false;
  if (log_ratio >= 0.0) return true;
  return std::log(rng.uniform()) < log_ratio;
}

/// Starting point: beta2 intercept at log of the mean positive count, all
/// other coefficients zero, theta = 1, delta = 0, sigma_w = 0.5; zeros get a
/// fair-coin detection indicator.
inline ParameterState initialize(const ModelSpec& spec, const Dataset& d, const MoranBasis* basis,
                                 std::uint64_t seed) {
  double sum = 0.0;
  std::size_t positives = 0;
  for (auto y : d.y)
    if (y > 0) {
      sum += static_cast<double>(y);
      ++positives;
    }
  if (positives == 0) throw InputError("all counts are zero; the model is not identifiable");
  if (spec.spatial && !basis) throw StructuralError("spatial model requires a Moran basis");

  ParameterState s;
  const Eigen::Index p = d.n_covariates();
  s.beta1 = Eigen::VectorXd::Zero(p);
  s.beta2 = Eigen::VectorXd::Zero(p);
  s.beta2[0] = std::log(sum / static_cast<double>(positives));
  s.theta = 1.0;
  s.delta = Eigen::VectorXd::Zero(spec.spatial ? basis->q() : 0);
  s.sigma_w = 0.5;
  s.z.resize(d.n_units());
  CounterRng rng = CounterRng::stream(seed, ~0ULL, 0x1417);
  for (std::size_t i = 0; i < d.n_units(); ++i) s.z[i] = d.y[i] > 0 ? 1 : (rng.uniform() < 0.5 ? 1 : 0);
  return s;
}

/// Conditional probability that a zero count came from the detected group.
inline double detected_zero_probability(CountFamily family, double pi, double mu, double theta) {
  const double a = std::log(pi) + count_logpmf(family, 0, mu, theta);
  const double b = std::log1p(-pi);
  return 1.0 / (1.0 + std::exp(b - a));
}

/// Metropolis-within-Gibbs kernel over a fixed (spec, dataset, basis),
/// caching linear predictors of the current state between updates.
class GibbsKernel {
public:
  GibbsKernel(const ModelSpec& spec, const Dataset& d, const MoranBasis* basis, int threads = 1)
      : spec_(spec), data_(d), basis_(basis), threads_(threads) {
    if (spec.spatial != (basis != nullptr))
      throw StructuralError("a Moran basis must be supplied exactly when the model is spatial");
    if (basis && static_cast<std::size_t>(basis->n_counties()) != d.n_counties())
      throw StructuralError("basis county count does not match dataset");
    log_factorial_.resize(d.n_units());
    for (std::size_t i = 0; i < d.n_units(); ++i) log_factorial_[i] = detail::log_factorial(d.y[i]);
    buffer_.resize(static_cast<Eigen::Index>(d.n_units()));
  }

  /// Rebuild caches for `s`. Must be called before updates on a new state.
  void attach(const ParameterState& s) {
    if (s.z.size() != data_.n_units()) throw StructuralError("indicator vector length mismatch");
    if (s.beta1.size() != data_.n_covariates() || s.beta2.size() != data_.n_covariates())
      throw StructuralError("coefficient length does not match design columns");
    if (basis_ && s.delta.size() != basis_->q()) throw StructuralError("delta length does not match basis rank");
    eta1_ = data_.design * s.beta1;
    xb2_ = data_.design * s.beta2;
    w_ = county_effects(s, data_, basis_);
    eta2_ = abundance_eta(xb2_, w_);
    refresh_count_constants(s.theta);
    refresh_detected(s);
    det_ll_ = detection_loglik(eta1_, s.z);
    cnt_ll_ = count_loglik(eta2_, s.theta, count_const_);
  }

  /// Gibbs step for the latent indicators of zero counts.
  void update_z(ParameterState& s, CounterRng& rng) {
    for (std::size_t i = 0; i < data_.n_units(); ++i) {
      if (data_.y[i] > 0) {
        s.z[i] = 1;
        continue;
      }
      const auto k = static_cast<Eigen::Index>(i);
      const double pi = clamp_pi(logistic(eta1_[k]));
      const double mu = clamp_mu(std::exp(eta2_[k]));
      s.z[i] = rng.uniform() < detected_zero_probability(spec_.count_family, pi, mu, s.theta) ? 1 : 0;
    }
    refresh_detected(s);
    det_ll_ = detection_loglik(eta1_, s.z);
    cnt_ll_ = count_loglik(eta2_, s.theta, count_const_);
  }

  /// Random-walk Metropolis update of one block. `chol` (optional) shapes
  /// the proposal of a vector block: step = scale * chol * N(0, I).
  bool update_block(ParameterState& s, Block b, CounterRng& rng, double scale,
                    const Eigen::MatrixXd* chol = nullptr) {
    if (!block_active(b, spec_))
      throw StructuralError(std::string("block '") + to_string(b) + "' is not part of this model");
    switch (b) {
    case Block::beta1: {
      Eigen::VectorXd prop = s.beta1 + vector_step(s.beta1.size(), rng, scale, chol);
      Eigen::VectorXd eta1 = data_.design * prop;
      const double ll = detection_loglik(eta1, s.z);
      const double ratio = ll - det_ll_ + beta_prior(prop) - beta_prior(s.beta1);
      if (!metropolis_accept(ratio, rng)) return false;
      s.beta1 = std::move(prop);
      eta1_ = std::move(eta1);
      det_ll_ = ll;
      return true;
    }
    case Block::beta2: {
      Eigen::VectorXd prop = s.beta2 + vector_step(s.beta2.size(), rng, scale, chol);
      Eigen::VectorXd xb2 = data_.design * prop;
      Eigen::VectorXd eta2 = abundance_eta(xb2, w_);
      const double ll = count_loglik(eta2, s.theta, count_const_);
      const double ratio = ll - cnt_ll_ + beta_prior(prop) - beta_prior(s.beta2);
      if (!metropolis_accept(ratio, rng)) return false;
      s.beta2 = std::move(prop);
      xb2_ = std::move(xb2);
      eta2_ = std::move(eta2);
      cnt_ll_ = ll;
      return true;
    }
    case Block::theta: {
      const double log_prop = std::log(s.theta) + scale * rng.normal();
      const double prop = std::exp(log_prop);
      if (!(prop > 0.0) || !std::isfinite(prop)) return false;
      Eigen::VectorXd consts = count_constants(prop);
      const double ll = count_loglik(eta2_, prop, consts);
      const double ratio = ll - cnt_ll_ + normal_logpdf(log_prop, 0.0, spec_.prior_log_theta_sd) -
                           normal_logpdf(std::log(s.theta), 0.0, spec_.prior_log_theta_sd);
      if (!metropolis_accept(ratio, rng)) return false;
      s.theta = prop;
      count_const_ = std::move(consts);
      cnt_ll_ = ll;
      return true;
    }
    case Block::delta: {
      Eigen::VectorXd prop = s.delta + vector_step(s.delta.size(), rng, scale, chol);
      Eigen::VectorXd w = spatial_effects(*basis_, prop);
      Eigen::VectorXd eta2 = abundance_eta(xb2_, w);
      const double ll = count_loglik(eta2, s.theta, count_const_);
      const double ratio = ll - cnt_ll_ + delta_prior(prop, s.sigma_w) - delta_prior(s.delta, s.sigma_w);
      if (!metropolis_accept(ratio, rng)) return false;
      s.delta = std::move(prop);
      w_ = std::move(w);
      eta2_ = std::move(eta2);
      cnt_ll_ = ll;
      return true;
    }
    case Block::sigma_w: {
      const double log_prop = std::log(s.sigma_w) + scale * rng.normal();
      const double prop = std::exp(log_prop);
      if (!(prop > 0.0) || !std::isfinite(prop)) return false;
      auto target = [&](double sw) {
        return delta_prior(s.delta, sw) + half_normal_logpdf(sw, spec_.prior_sigma_w_scale) + std::log(sw);
      };
      if (!metropolis_accept(target(prop) - target(s.sigma_w), rng)) return false;
      s.sigma_w = prop;
      return true;
    }
    }
    return false;
  }

  /// Log posterior of the augmented state (y, z, parameters), up to a constant.
  double log_posterior(const ParameterState& s) const { return det_ll_ + cnt_ll_ + log_prior(s, spec_); }

  const Eigen::VectorXd& eta1() const { return eta1_; }
  const Eigen::VectorXd& eta2() const { return eta2_; }

private:
  Eigen::VectorXd abundance_eta(const Eigen::VectorXd& xb2, const Eigen::VectorXd& w) const {
    if (!basis_) return xb2;
    Eigen::VectorXd eta = xb2;
    for (Eigen::Index i = 0; i < eta.size(); ++i) eta[i] += w[data_.county_index[static_cast<std::size_t>(i)]];
    return eta;
  }

  Eigen::VectorXd vector_step(Eigen::Index dim, CounterRng& rng, double scale, const Eigen::MatrixXd* chol) {
    Eigen::VectorXd e(dim);
    for (Eigen::Index k = 0; k < dim; ++k) e[k] = rng.normal();
    if (chol && chol->rows() == dim) {
      Eigen::VectorXd step = chol->triangularView<Eigen::Lower>() * e;
      return scale * step;
    }
    return scale * e;
  }

  double beta_prior(const Eigen::VectorXd& b) const {
    double lp = 0.0;
    for (Eigen::Index k = 0; k < b.size(); ++k) lp += normal_logpdf(b[k], 0.0, spec_.prior_beta_sd);
    return lp;
  }

  static double delta_prior(const Eigen::VectorXd& delta, double sigma_w) {
    double lp = 0.0;
    for (Eigen::Index j = 0; j < delta.size(); ++j) lp += normal_logpdf(delta[j], 0.0, sigma_w);
    return lp;
  }

  void refresh_detected(const ParameterState& s) {
    detected_.clear();
    for (std::size_t i = 0; i < s.z.size(); ++i)
      if (s.z[i]) detected_.push_back(static_cast<Eigen::Index>(i));
  }

  /// Per-unit log-pmf terms that depend on theta but not on mu.
  Eigen::VectorXd count_constants(double theta) const {
    Eigen::VectorXd c(static_cast<Eigen::Index>(data_.n_units()));
    if (spec_.count_family == CountFamily::poisson) {
      for (std::size_t i = 0; i < data_.n_units(); ++i) c[static_cast<Eigen::Index>(i)] = -log_factorial_[i];
      return c;
    }
    const auto n = static_cast<std::ptrdiff_t>(data_.n_units());
    detail::parallel_for(n, threads_, [&](std::ptrdiff_t i) {
      const auto y = data_.y[static_cast<std::size_t>(i)];
      c[i] = y == 0 ? 0.0 : detail::log_rising_factorial(y, theta) - log_factorial_[static_cast<std::size_t>(i)];
    });
    return c;
  }

  void refresh_count_constants(double theta) { count_const_ = count_constants(theta); }

  double detection_loglik(const Eigen::VectorXd& eta1, const std::vector<std::uint8_t>& z) {
    const auto n = static_cast<std::ptrdiff_t>(eta1.size());
    detail::parallel_for(n, threads_, [&](std::ptrdiff_t i) {
      const double pi = clamp_pi(logistic(eta1[i]));
      buffer_[i] = z[static_cast<std::size_t>(i)] ? std::log(pi) : std::log1p(-pi);
    });
    return buffer_.head(n).sum();
  }

  /// Sum over detected units of the count log-pmf.
  double count_loglik(const Eigen::VectorXd& eta2, double theta, const Eigen::VectorXd& consts) {
    const auto m = static_cast<std::ptrdiff_t>(detected_.size());
    const bool poisson = spec_.count_family == CountFamily::poisson;
    detail::parallel_for(m, threads_, [&](std::ptrdiff_t k) {
      const Eigen::Index i = detected_[static_cast<std::size_t>(k)];
      const double mu = clamp_mu(std::exp(eta2[i]));
      const double y = static_cast<double>(data_.y[static_cast<std::size_t>(i)]);
      double v;
      if (poisson) {
        v = (y > 0 ? y * std::log(mu) : 0.0) - mu;
      } else {
        v = -theta * std::log1p(mu / theta) - (y > 0 ? y * std::log1p(theta / mu) : 0.0);
      }
      buffer_[k] = v + consts[i];
    });
    double total = 0.0;
    for (std::ptrdiff_t k = 0; k < m; ++k) total += buffer_[k];
    return total;
  }

  const ModelSpec& spec_;
  const Dataset& data_;
  const MoranBasis* basis_;
  int threads_;
  std::vector<double> log_factorial_;
  Eigen::VectorXd eta1_, xb2_, eta2_, w_, count_const_, buffer_;
  std::vector<Eigen::Index> detected_;
  double det_ll_ = 0.0;
  double cnt_ll_ = 0.0;
};

/// One Gibbs draw of the detection indicators at a fixed state.
inline void update_z(ParameterState& s, const ModelSpec& spec, const Dataset& d, const MoranBasis* basis,
                     CounterRng& rng) {
  GibbsKernel k(spec, d, basis);
  k.attach(s);
  k.update_z(s, rng);
}

/// One Metropolis update of `block`; returns whether the proposal was accepted.
inline bool update_block(ParameterState& s, Block block, const ModelSpec& spec, const Dataset& d,
                         const MoranBasis* basis, CounterRng& rng, double scale) {
  GibbsKernel k(spec, d, basis);
  k.attach(s);
  return k.update_block(s, block, rng, scale);
}

namespace detail {

/// Robbins-Monro tuning of one block's log proposal scale, plus an optional
/// running covariance of the block used to shape vector proposals.
struct BlockTuner {
  Block block{};
  Eigen::Index dim = 0;
  double log_scale = 0.0;
  double target = 0.234;
  long window_accepted = 0;
  long window_proposed = 0;
  long accepted = 0;
  long proposed = 0;
  long adaptations = 0;

  bool use_covariance = false;
  long cov_count = 0;
  Eigen::VectorXd cov_mean;
  Eigen::MatrixXd cov_m2;
  Eigen::MatrixXd chol;

  double scale() const { return std::exp(log_scale); }

  void record(bool acc, bool count_total) {
    ++window_proposed;
    if (acc) ++window_accepted;
    if (count_total) {
      ++proposed;
      if (acc) ++accepted;
    }
  }

  void end_window() {
    ++adaptations;
    const double rate = static_cast<double>(window_accepted) / static_cast<double>(std::max(1L, window_proposed));
    log_scale += 2.0 * (rate - target) / std::sqrt(static_cast<double>(adaptations));
    log_scale = std::clamp(log_scale, -30.0, 5.0);
    window_accepted = window_proposed = 0;
  }

  void observe(const Eigen::VectorXd& x) {
    if (cov_count == 0) {
      cov_mean = Eigen::VectorXd::Zero(dim);
      cov_m2 = Eigen::MatrixXd::Zero(dim, dim);
    }
    ++cov_count;
    const Eigen::VectorXd d1 = x - cov_mean;
    cov_mean += d1 / static_cast<double>(cov_count);
    cov_m2.noalias() += d1 * (x - cov_mean).transpose();
  }

  void refresh_covariance() {
    if (cov_count < 2) return;
    Eigen::MatrixXd cov = cov_m2 / static_cast<double>(cov_count - 1);
    const double ridge = 1e-6 * std::max(1e-12, cov.diagonal().mean());
    cov.diagonal().array() += ridge;
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) return;
    chol = llt.matrixL();
    if (!use_covariance) {
      use_covariance = true;
      log_scale = std::log(2.38 / std::sqrt(static_cast<double>(dim)));
      adaptations = 0;
    }
  }
};

inline Eigen::VectorXd block_value(const ParameterState& s, Block b) {
  switch (b) {
  case Block::beta1: return s.beta1;
  case Block::beta2: return s.beta2;
  case Block::delta: return s.delta;
  case Block::theta: return Eigen::VectorXd::Constant(1, std::log(s.theta));
  case Block::sigma_w: return Eigen::VectorXd::Constant(1, std::log(s.sigma_w));
  }
  return {};
}

} // namespace detail

/// Systematic-scan sampler: indicators, then each active block in the order
/// beta1, beta2, theta, delta, sigma_w. Proposal scales adapt during
/// burn-in only. Randomness for iteration t and block b comes from the
/// stream keyed by (seed, t, b), so the output is a function of the
/// configuration alone.
inline PosteriorSamples run_chain(const ModelSpec& spec, const Dataset& d, const MoranBasis* basis,
                                  const SamplerConfig& config) {
  validate(config);
  validate(spec);
  GibbsKernel kernel(spec, d, basis, config.threads);
  ParameterState state = initialize(spec, d, basis, config.seed);
  kernel.attach(state);
  const double lp0 = kernel.log_posterior(state);
  if (!std::isfinite(lp0)) throw NumericalError("log-posterior is not finite at the initial state");

  std::vector<detail::BlockTuner> tuners;
  for (Block b : kAllBlocks) {
    if (!block_active(b, spec)) continue;
    detail::BlockTuner t;
    t.block = b;
    t.dim = detail::block_value(state, b).size();
    if (t.dim == 0) continue;
    t.log_scale = std::log(std::max(config.block_scales[b], 1e-300));
    t.target = t.dim == 1 ? config.target_acceptance_scalar : config.target_acceptance_vector;
    tuners.push_back(std::move(t));
  }

  PosteriorSamples out;
  out.config = config;
  const int post = config.n_iterations - config.n_burnin;
  const int n_draws = post / config.thin;
  out.draws.reserve(static_cast<std::size_t>(n_draws));
  out.pointwise_loglik.resize(n_draws, static_cast<Eigen::Index>(d.n_units()));
  const long cov_start = std::max<long>(config.adapt_window, config.n_burnin / 5);

  int stored = 0;
  for (int it = 0; it < config.n_iterations; ++it) {
    const bool burnin = it < config.n_burnin;
    const auto iter = static_cast<std::uint64_t>(it);
    {
      CounterRng rng = CounterRng::stream(config.seed, iter, 0);
      kernel.update_z(state, rng);
    }
    for (auto& t : tuners) {
      CounterRng rng = CounterRng::stream(config.seed, iter, 1 + static_cast<std::uint64_t>(t.block));
      const Eigen::MatrixXd* chol = t.use_covariance ? &t.chol : nullptr;
      const bool acc = kernel.update_block(state, t.block, rng, config.block_scales[t.block] == 0.0 ? 0.0 : t.scale(), chol);
      t.record(acc, !burnin);
      if (burnin) {
        if (config.adapt_covariance && t.dim > 1 && it >= cov_start) t.observe(detail::block_value(state, t.block));
        if ((it + 1) % config.adapt_window == 0) {
          if (config.adapt_covariance && t.dim > 1 && t.cov_count >= 2L * config.adapt_window)
            t.refresh_covariance();
          t.end_window();
        }
      }
    }
    if (!burnin && (it + 1 - config.n_burnin) % config.thin == 0 && stored < n_draws) {
      ClampStats clamps;
      out.pointwise_loglik.row(stored) = loglik_pointwise(state, spec, d, basis, config.threads, &clamps).transpose();
      out.clamps += clamps;
      ParameterState snap = state;
      if (!config.store_z) snap.z.clear();
      out.draws.push_back(std::move(snap));
      ++stored;
    }
  }

  for (const auto& t : tuners) {
    out.final_scales[t.block] = config.block_scales[t.block] == 0.0 ? 0.0 : t.scale();
    const double rate = t.proposed > 0 ? static_cast<double>(t.accepted) / static_cast<double>(t.proposed) : 0.0;
    out.acceptance_rates.emplace_back(to_string(t.block), rate);
  }
  if (!out.pointwise_loglik.allFinite())
    throw NumericalError("non-finite pointwise log-likelihood in recorded draws");
  return out;
}

/// Independent chains with seeds derived from config.seed, run one worker
/// per chain.
inline std::vector<PosteriorSamples> run_chains(const ModelSpec& spec, const Dataset& d, const MoranBasis* basis,
                                                const SamplerConfig& config, int n_chains, bool parallel = true) {
  if (n_chains < 1) throw InputError("number of chains must be at least 1");
  std::vector<PosteriorSamples> chains(static_cast<std::size_t>(n_chains));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_chains));
  auto work = [&](int c) {
    try {
      SamplerConfig cc = config;
      cc.seed = derive_seed(config.seed, static_cast<std::uint64_t>(c));
      chains[static_cast<std::size_t>(c)] = run_chain(spec, d, basis, cc);
    } catch (...) {
      errors[static_cast<std::size_t>(c)] = std::current_exception();
    }
  };
  if (parallel && n_chains > 1) {
    std::vector<std::thread> workers;
    for (int c = 0; c < n_chains; ++c) workers.emplace_back(work, c);
    for (auto& w : workers) w.join();
  } else {
    for (int c = 0; c < n_chains; ++c) work(c);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return chains;
}

} // namespace zinbsf
