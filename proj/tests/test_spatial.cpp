#include <cmath>
#include <fstream>

#include <gtest/gtest.h>

#include "basis_check.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "zinbsf/errors.hpp"
#include "zinbsf/simulate/simulate.hpp"
#include "zinbsf/spatial/graph.hpp"
#include "zinbsf/spatial/moran_basis.hpp"

using namespace zinbsf;

namespace {

std::vector<std::pair<int, int>> lattice_edges(int rows, int cols) {
  std::vector<std::pair<int, int>> e;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      if (c + 1 < cols) e.emplace_back(r * cols + c, r * cols + c + 1);
      if (r + 1 < rows) e.emplace_back(r * cols + c, (r + 1) * cols + c);
    }
  return e;
}

std::string write_file(const std::string& name, const std::string& text) {
  const auto path = fixtures::temp_dir("spatial") / name;
  std::ofstream(path) << text;
  return path.string();
}

} // namespace

TEST(Graph, BuildsSortedDedupedEdges) {
  std::vector<EdgeRecord> recs{{"b", "a", 0}, {"a", "b", 0}, {"c", "b", 0}};
  const AdjacencyGraph g = build_graph(recs, {"a", "b", "c"});
  EXPECT_EQ(g.n_edges(), 2u);
  EXPECT_EQ(g.edges[0], std::make_pair(0, 1));
  EXPECT_EQ(g.degrees(), (std::vector<int>{1, 2, 1}));
}

TEST(Graph, RejectsSelfLoopUnknownIdAndEmptyList) {
  std::vector<EdgeRecord> loop{{"a", "a", 3}};
  EXPECT_THROW(build_graph(loop, {"a"}), InputError);
  std::vector<EdgeRecord> unknown{{"a", "zz", 4}};
  try {
    build_graph(unknown, {"a", "b"});
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos);
  }
  EXPECT_THROW(build_graph(std::vector<EdgeRecord>{}, {"a"}), InputError);
  EXPECT_THROW(build_graph(std::vector<EdgeRecord>{{"a", "b", 0}}, {"a", "b", "a"}), InputError);
}

TEST(Graph, ReadsCommaTabAndSpaceSeparatedFiles) {
  const auto path = write_file("adj.txt", "# neighbors\ncounty_id_a,county_id_b\nA,B\n\nB\tC\nC D\n");
  const auto recs = read_adjacency_file(path);
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_EQ(recs[1].a, "B");
  EXPECT_EQ(recs[1].line, 5u);
  const AdjacencyGraph g = build_graph(recs);
  EXPECT_EQ(g.county_ids, (std::vector<std::string>{"A", "B", "C", "D"}));
}

TEST(Graph, MalformedRowReportsLine) {
  const auto path = write_file("bad.txt", "a,b\nA,B,C\n");
  try {
    read_adjacency_file(path);
    FAIL();
  } catch (const InputError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(MoranOperator, MatchesExplicitMatrix) {
  const auto edges = lattice_edges(3, 4);
  const AdjacencyGraph g = graph_from_index_pairs(basis_check::ids(12), edges);
  const auto m = oracle::moran_matrix(12, edges);
  Eigen::VectorXd v(12);
  for (int i = 0; i < 12; ++i) v[i] = std::sin(1.0 + i * i);
  const Eigen::VectorXd got = moran_operator_apply(g, v);
  for (int i = 0; i < 12; ++i) {
    double ref = 0.0;
    for (int j = 0; j < 12; ++j) ref += m[i][j] * v[j];
    EXPECT_NEAR(got[i], ref, 1e-13);
  }
  EXPECT_THROW(moran_operator_apply(g, Eigen::VectorXd::Zero(5)), StructuralError);
}

TEST(MoranBasis, TwoDisjointEdges) {
  const AdjacencyGraph g = graph_from_index_pairs(basis_check::ids(4), std::vector<std::pair<int, int>>{{0, 1}, {2, 3}});
  const MoranBasis b = compute_basis(g, 1);
  ASSERT_EQ(b.q(), 1);
  EXPECT_NEAR(b.eigenvalues[0], 1.0, 1e-12);
  const Eigen::Vector4d expected(0.5, 0.5, -0.5, -0.5);
  EXPECT_LT((b.vectors.col(0) - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(MoranBasis, LatticeMatchesJacobiOracle) {
  const auto edges = lattice_edges(10, 10);
  const AdjacencyGraph g = graph_from_index_pairs(basis_check::ids(100), edges);
  const auto ref = oracle::jacobi_eigen(oracle::moran_matrix(100, edges));
  const MoranBasis b = compute_basis(g, 30);
  EXPECT_EQ(b.q(), 30);
  EXPECT_LT(basis_check::max_deviation(b, ref), 1e-8);
  const auto [ortho, mean] = basis_check::orthonormality(b);
  EXPECT_LT(ortho, 1e-10);
  EXPECT_LT(mean, 1e-10);
}

TEST(MoranBasis, RandomGraphsMatchJacobiOracle) {
  for (const auto& [n, edges] : basis_check::random_graphs(11, 3, 120)) {
    const AdjacencyGraph g = graph_from_index_pairs(basis_check::ids(n), edges);
    const auto ref = oracle::jacobi_eigen(oracle::moran_matrix(n, edges));
    const MoranBasis b = compute_basis(g, 12);
    EXPECT_LT(basis_check::max_deviation(b, ref), 1e-8) << "n=" << n;
  }
}

TEST(MoranBasis, EigenvaluesPositiveAndNonIncreasing) {
  const MoranBasis b = compute_basis(lattice_graph(7, 9), 40);
  for (int k = 0; k < b.q(); ++k) {
    EXPECT_GT(b.eigenvalues[k], 0.0);
    if (k > 0) { EXPECT_LE(b.eigenvalues[k], b.eigenvalues[k - 1] + 1e-12); }
  }
}

TEST(MoranBasis, SignConventionFirstEntryPositive) {
  const MoranBasis b = compute_basis(lattice_graph(6, 6), 10);
  for (int k = 0; k < b.q(); ++k) {
    const double cutoff = 1e-8 * b.vectors.col(k).cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < b.vectors.rows(); ++i)
      if (std::abs(b.vectors(i, k)) > cutoff) {
        EXPECT_GT(b.vectors(i, k), 0.0);
        break;
      }
  }
}

TEST(MoranBasis, TruncatesWithWarningWhenFewPositiveEigenvalues) {
  // the Moran operator of a star has fewer positive eigenvalues than leaves
  const AdjacencyGraph g =
      graph_from_index_pairs(basis_check::ids(5), std::vector<std::pair<int, int>>{{0, 1}, {0, 2}, {0, 3}, {0, 4}});
  const auto ref = oracle::jacobi_eigen(oracle::moran_matrix(5, g.edges));
  int positive = 0;
  for (double v : ref.values) positive += v > 1e-9;
  const MoranBasis b = compute_basis(g, 4);
  EXPECT_EQ(b.q(), positive);
  EXPECT_LT(b.q(), 4);
  ASSERT_FALSE(b.warnings.empty());
  EXPECT_NE(b.warnings.front().find("truncated"), std::string::npos);
}

TEST(MoranBasis, IsolatedCountiesWarn) {
  const AdjacencyGraph g = graph_from_index_pairs(basis_check::ids(5), std::vector<std::pair<int, int>>{{0, 1}, {1, 2}, {2, 3}});
  const MoranBasis b = compute_basis(g, 1);
  bool found = false;
  for (const auto& w : b.warnings) found |= w.find("isolated") != std::string::npos;
  EXPECT_TRUE(found);
}

TEST(MoranBasis, InvalidRequests) {
  const AdjacencyGraph g = lattice_graph(3, 3);
  EXPECT_THROW(compute_basis(g, 0), InputError);
  EXPECT_THROW(compute_basis(lattice_graph(1, 1), 1), InputError);
  EXPECT_EQ(default_basis_rank(5), 1);
  EXPECT_EQ(default_basis_rank(500), 50);
  EXPECT_EQ(default_basis_rank(5000), 100);
}

TEST(Lanczos, AgreesWithDenseOnDegenerateLattice) {
  const AdjacencyGraph g = lattice_graph(24, 24);
  BasisOptions dense_opt, lanczos_opt;
  dense_opt.solver = EigenSolverKind::dense;
  lanczos_opt.solver = EigenSolverKind::lanczos;
  const MoranBasis d = compute_basis(g, 57, dense_opt);
  const MoranBasis l = compute_basis(g, 57, lanczos_opt);
  ASSERT_EQ(d.q(), l.q());
  EXPECT_LT((d.eigenvalues - l.eigenvalues).cwiseAbs().maxCoeff(), 1e-8);
  // compare spanned subspaces up to the last complete eigenvalue cluster
  const MoranBasis full = compute_basis(g, 80, dense_opt);
  Eigen::Index last = d.q();
  while (last > 0 && std::abs(full.eigenvalues[last] - full.eigenvalues[last - 1]) < 1e-6) --last;
  ASSERT_GT(last, 40);
  const Eigen::MatrixXd pd = d.vectors.leftCols(last) * d.vectors.leftCols(last).transpose();
  const Eigen::MatrixXd pl = l.vectors.leftCols(last) * l.vectors.leftCols(last).transpose();
  EXPECT_LT((pd - pl).cwiseAbs().maxCoeff(), 1e-8);
  const auto [ortho, mean] = basis_check::orthonormality(l);
  EXPECT_LT(ortho, 1e-10);
  EXPECT_LT(mean, 1e-10);
}

TEST(Lanczos, AgreesWithDenseOnRandomGraph) {
  const auto graphs = basis_check::random_graphs(5, 2, 700);
  for (const auto& [n, edges] : graphs) {
    const AdjacencyGraph g = graph_from_index_pairs(basis_check::ids(n), edges);
    BasisOptions dense_opt, lanczos_opt;
    dense_opt.solver = EigenSolverKind::dense;
    lanczos_opt.solver = EigenSolverKind::lanczos;
    const MoranBasis d = compute_basis(g, 20, dense_opt);
    const MoranBasis l = compute_basis(g, 20, lanczos_opt);
    ASSERT_EQ(d.q(), l.q());
    EXPECT_LT((d.eigenvalues - l.eigenvalues).cwiseAbs().maxCoeff(), 1e-8);
    oracle::EigenResult ref;
    for (int k = 0; k < d.q(); ++k) {
      ref.values.push_back(d.eigenvalues[k]);
      ref.vectors.emplace_back(d.vectors.col(k).data(), d.vectors.col(k).data() + n);
    }
    // trailing cluster may be cut by q; restrict the comparison to complete clusters
    MoranBasis head = l;
    int keep = l.q();
    while (keep > 1 && std::abs(d.eigenvalues[keep - 1] - d.eigenvalues[keep - 2]) < 1e-6) --keep;
    head.vectors = l.vectors.leftCols(keep - 1);
    head.eigenvalues = l.eigenvalues.head(keep - 1);
    EXPECT_LT(basis_check::max_deviation(head, ref), 1e-7) << "n=" << n;
  }
}

TEST(MoransI, SmoothFieldPositiveCheckerboardNegative) {
  const AdjacencyGraph g = lattice_graph(8, 8);
  Eigen::VectorXd smooth(64), checker(64);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) {
      smooth[r * 8 + c] = r + c;
      checker[r * 8 + c] = (r + c) % 2 ? 1.0 : -1.0;
    }
  EXPECT_GT(morans_i(g, smooth), 0.5);
  EXPECT_NEAR(morans_i(g, checker), -1.0, 1e-12);
}
