#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "zinbsf/errors.hpp"
#include "zinbsf/rng.hpp"
#include "zinbsf/spatial/graph.hpp"

namespace zinbsf {

/// Truncated eigenbasis of the Moran operator: column j of `vectors` is the
/// eigenvector for `eigenvalues[j]`, eigenvalues positive and non-increasing.
struct MoranBasis {
  Eigen::MatrixXd vectors;
  Eigen::VectorXd eigenvalues;
  int requested_q = 0;
  std::vector<std::string> warnings;

  int q() const { return static_cast<int>(eigenvalues.size()); }
  Eigen::Index n_counties() const { return vectors.rows(); }
};

enum class EigenSolverKind { automatic, dense, lanczos };

struct BasisOptions {
  EigenSolverKind solver = EigenSolverKind::automatic;
  /// Graphs with fewer nodes than this use the dense solver under `automatic`.
  int dense_threshold = 500;
  double tolerance = 1e-10;
  std::uint64_t seed = 0x4d6f72616eULL;
};

/// min(100, n/10), and at least 1.
inline int default_basis_rank(std::size_t n_counties) {
  return std::max(1, static_cast<int>(std::min<std::size_t>(100, n_counties / 10)));
}

namespace detail {

/// Flip each column so its first entry of non-negligible magnitude is positive.
inline void apply_sign_convention(Eigen::MatrixXd& v) {
  for (Eigen::Index j = 0; j < v.cols(); ++j) {
    const double cutoff = 1e-8 * v.col(j).cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
      if (std::abs(v(i, j)) > cutoff) {
        if (v(i, j) < 0) v.col(j) *= -1.0;
        break;
      }
    }
  }
}

struct EigenPairs {
  std::vector<double> values;
  std::vector<Eigen::VectorXd> vectors;
};

inline Eigen::MatrixXd dense_moran_matrix(const AdjacencyGraph& g) {
  const auto n = static_cast<Eigen::Index>(g.n_counties());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (auto [i, j] : g.edges) {
    a(i, j) = 1.0;
    a(j, i) = 1.0;
  }
  // P A P, P = I - 11'/n: subtract row and column means
  const Eigen::VectorXd row_mean = a.rowwise().mean();
  a.colwise() -= row_mean;
  const Eigen::RowVectorXd col_mean = a.colwise().mean();
  a.rowwise() -= col_mean;
  return 0.5 * (a + a.transpose());
}

/// Every eigenpair with eigenvalue above `floor`, descending.
inline EigenPairs dense_top_pairs(const AdjacencyGraph& g, double floor) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense_moran_matrix(g));
  if (es.info() != Eigen::Success) throw NumericalError("dense eigensolver failed");
  EigenPairs out;
  for (Eigen::Index k = es.eigenvalues().size() - 1; k >= 0; --k) {
    if (es.eigenvalues()[k] <= floor) break;
    out.values.push_back(es.eigenvalues()[k]);
    out.vectors.emplace_back(es.eigenvectors().col(k));
  }
  return out;
}

inline void orthogonalize(Eigen::VectorXd& v, const Eigen::MatrixXd& basis, Eigen::Index cols) {
  // two passes of classical Gram-Schmidt
  for (int pass = 0; pass < 2; ++pass) {
    if (cols == 0) break;
    const Eigen::VectorXd coeff = basis.leftCols(cols).transpose() * v;
    v.noalias() -= basis.leftCols(cols) * coeff;
  }
}

/// Lanczos with full reorthogonalization, locking converged Ritz pairs and
/// restarting on the deflated operator until the top `want` eigenvalues
/// above `floor` are certified.
inline EigenPairs lanczos_top_pairs(const AdjacencyGraph& g, int want, double floor,
                                    const BasisOptions& opt) {
  const auto n = static_cast<Eigen::Index>(g.n_counties());
  // locked(:,0) is the normalised constant vector, an eigenvector with value 0
  Eigen::MatrixXd locked(n, std::min<Eigen::Index>(n, 2 * want + 16));
  locked.col(0).setConstant(1.0 / std::sqrt(static_cast<double>(n)));
  Eigen::Index n_locked = 1;
  EigenPairs found;

  double scale = 1.0;
  for (const auto& nb : g.neighbors) scale = std::max(scale, static_cast<double>(nb.size()));
  const double tol = opt.tolerance * scale;

  Eigen::Index krylov = std::max<Eigen::Index>(2 * want + 20, 40);
  int idle_rounds = 0;
  for (std::uint64_t round = 0;; ++round) {
    const Eigen::Index free_dim = n - n_locked;
    if (free_dim <= 0) break;
    const Eigen::Index m = std::min(krylov, free_dim);

    CounterRng rng = CounterRng::stream(opt.seed, round);
    auto random_direction = [&](const Eigen::MatrixXd& q, Eigen::Index cols) {
      Eigen::VectorXd v(n);
      for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.normal();
      orthogonalize(v, locked, n_locked);
      orthogonalize(v, q, cols);
      return v;
    };

    // Krylov basis Q and AQ; on breakdown continue from a fresh direction so
    // every copy of a degenerate eigenvalue can appear in one round
    Eigen::MatrixXd q(n, m), aq(n, m);
    Eigen::Index steps = 0;
    Eigen::VectorXd r = random_direction(q, 0);
    for (Eigen::Index j = 0; j < m; ++j) {
      double norm = r.norm();
      if (norm <= 1e-8 * scale) {
        r = random_direction(q, j);
        norm = r.norm();
        if (norm <= 1e-8) break;
      }
      q.col(j) = r / norm;
      aq.col(j) = moran_operator_apply(g, q.col(j));
      steps = j + 1;
      r = aq.col(j);
      orthogonalize(r, locked, n_locked);
      orthogonalize(r, q, j + 1);
    }
    if (steps == 0) break;

    // Rayleigh-Ritz on the explicitly projected operator
    const Eigen::MatrixXd h = q.leftCols(steps).transpose() * aq.leftCols(steps);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (h + h.transpose()));

    const double cutoff = found.values.size() >= static_cast<std::size_t>(want)
                              ? *std::min_element(found.values.begin(), found.values.end())
                              : floor;
    int newly_locked = 0;
    bool top_seen = false, top_below_cutoff = false;
    for (Eigen::Index k = steps - 1; k >= 0; --k) {
      const double ritz = es.eigenvalues()[k];
      if (!top_seen) {
        top_seen = true;
        top_below_cutoff = ritz <= cutoff;
      }
      if (ritz <= floor) break;
      if (found.values.size() >= static_cast<std::size_t>(want) && ritz <= cutoff) break;
      Eigen::VectorXd y = q.leftCols(steps) * es.eigenvectors().col(k);
      orthogonalize(y, locked, n_locked);
      const double norm = y.norm();
      if (norm < 0.5) continue;
      y /= norm;
      const Eigen::VectorXd ay = moran_operator_apply(g, y);
      const double rayleigh = y.dot(ay);
      if ((ay - rayleigh * y).norm() > tol) break;
      if (n_locked == locked.cols())
        locked.conservativeResize(Eigen::NoChange, std::min<Eigen::Index>(n, 2 * locked.cols()));
      locked.col(n_locked++) = y;
      found.values.push_back(rayleigh);
      found.vectors.push_back(y);
      ++newly_locked;
      if (n_locked >= n) break;
    }

    if (newly_locked > 0) {
      idle_rounds = 0;
      continue;
    }
    // nothing locked: the deflated spectrum lies below what is needed, or the
    // Krylov space was too small to converge the leading pair
    if (top_seen && top_below_cutoff) break;
    if (steps == m && krylov < free_dim) {
      krylov = std::min<Eigen::Index>(2 * krylov, free_dim);
      continue;
    }
    if (++idle_rounds > 3) break;
  }

  std::vector<std::size_t> order(found.values.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return found.values[a] > found.values[b]; });
  EigenPairs sorted;
  for (std::size_t i : order) {
    sorted.values.push_back(found.values[i]);
    sorted.vectors.push_back(std::move(found.vectors[i]));
  }
  return sorted;
}

} // namespace detail

/// Leading q eigenpairs of the Moran operator with positive eigenvalue.
/// When fewer than q eigenvalues are positive the basis is truncated and a
/// warning is recorded.
inline MoranBasis compute_basis(const AdjacencyGraph& graph, int q, const BasisOptions& opt = {}) {
  if (q <= 0) throw InputError("basis rank q must be at least 1 (got " + std::to_string(q) + ")");
  const auto n = static_cast<Eigen::Index>(graph.n_counties());
  if (n < 2) throw InputError("Moran basis needs at least two counties");

  double scale = 1.0;
  for (const auto& nb : graph.neighbors) scale = std::max(scale, static_cast<double>(nb.size()));
  const double floor = 1e-9 * scale;

  const bool dense = opt.solver == EigenSolverKind::dense ||
                     (opt.solver == EigenSolverKind::automatic && n < opt.dense_threshold);
  detail::EigenPairs pairs =
      dense ? detail::dense_top_pairs(graph, floor) : detail::lanczos_top_pairs(graph, q, floor, opt);

  const int available = static_cast<int>(pairs.values.size());
  const int keep = std::min(q, available);
  MoranBasis basis;
  basis.requested_q = q;
  basis.vectors.resize(n, keep);
  basis.eigenvalues.resize(keep);
  for (int j = 0; j < keep; ++j) {
    basis.vectors.col(j) = pairs.vectors[static_cast<std::size_t>(j)];
    basis.eigenvalues[j] = pairs.values[static_cast<std::size_t>(j)];
  }
  detail::apply_sign_convention(basis.vectors);
  if (keep < q) {
    basis.warnings.push_back("requested basis rank " + std::to_string(q) + " but the Moran operator has only " +
                             std::to_string(available) + " positive eigenvalues; basis truncated to " +
                             std::to_string(keep));
  }
  if (!graph.isolated().empty()) {
    basis.warnings.push_back(std::to_string(graph.isolated().size()) + " isolated counties in adjacency graph");
  }
  return basis;
}

/// W = M delta, one spatial effect per county.
inline Eigen::VectorXd spatial_effects(const MoranBasis& basis, const Eigen::VectorXd& delta) {
  if (delta.size() != basis.q())
    throw StructuralError("delta has length " + std::to_string(delta.size()) + " but basis rank is " +
                          std::to_string(basis.q()));
  return basis.vectors * delta;
}

/// Moran's I of x over the graph.
inline double morans_i(const AdjacencyGraph& g, const Eigen::VectorXd& x) {
  const double n = static_cast<double>(g.n_counties());
  const Eigen::VectorXd c = x.array() - x.mean();
  double cross = 0.0;
  for (auto [i, j] : g.edges) cross += 2.0 * c[i] * c[j];
  const double s0 = 2.0 * static_cast<double>(g.n_edges());
  return (n / s0) * cross / c.squaredNorm();
}

} // namespace zinbsf
