#pragma once

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "zinbsf/errors.hpp"

namespace zinbsf {

/// One neighbor pair as read from input. `line` is 0 when not file-backed.
struct EdgeRecord {
  std::string a;
  std::string b;
  std::size_t line = 0;
};

/// Undirected county neighbor structure. Edges are stored once, as (i, j)
/// with i < j, in lexicographic order; neighbor lists are sorted.
struct AdjacencyGraph {
  std::vector<std::string> county_ids;
  std::vector<std::pair<int, int>> edges;
  std::vector<std::vector<int>> neighbors;

  std::size_t n_counties() const { return county_ids.size(); }
  std::size_t n_edges() const { return edges.size(); }

  std::vector<int> degrees() const {
    std::vector<int> d(neighbors.size());
    for (std::size_t i = 0; i < neighbors.size(); ++i) d[i] = static_cast<int>(neighbors[i].size());
    return d;
  }

  /// Counties with no neighbors. They are allowed but callers should warn.
  std::vector<int> isolated() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < neighbors.size(); ++i)
      if (neighbors[i].empty()) out.push_back(static_cast<int>(i));
    return out;
  }
};

namespace detail {

inline std::string record_context(const EdgeRecord& r, std::size_t k) {
  std::ostringstream os;
  if (r.line > 0)
    os << "line " << r.line;
  else
    os << "edge record " << k;
  os << " (" << r.a << ", " << r.b << ")";
  return os.str();
}

} // namespace detail

/// Graph over a fixed set of county indices from (i, j) index pairs.
/// Duplicates and reversed pairs collapse; self-loops and out-of-range
/// indices throw.
inline AdjacencyGraph graph_from_index_pairs(std::vector<std::string> county_ids,
                                             std::span<const std::pair<int, int>> pairs) {
  const int n = static_cast<int>(county_ids.size());
  std::vector<std::pair<int, int>> edges;
  edges.reserve(pairs.size());
  for (auto [i, j] : pairs) {
    if (i < 0 || j < 0 || i >= n || j >= n)
      throw InputError("edge index out of range: (" + std::to_string(i) + ", " + std::to_string(j) + ")");
    if (i == j) throw InputError("self-loop at county index " + std::to_string(i));
    edges.emplace_back(std::min(i, j), std::max(i, j));
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  AdjacencyGraph g;
  g.county_ids = std::move(county_ids);
  g.neighbors.assign(static_cast<std::size_t>(n), {});
  for (auto [i, j] : edges) {
    g.neighbors[static_cast<std::size_t>(i)].push_back(j);
    g.neighbors[static_cast<std::size_t>(j)].push_back(i);
  }
  for (auto& nb : g.neighbors) std::sort(nb.begin(), nb.end());
  g.edges = std::move(edges);
  return g;
}

/// Build a graph whose index space is `county_ids`. Every id named by an
/// edge must be present there.
inline AdjacencyGraph build_graph(std::span<const EdgeRecord> edge_list,
                                  std::vector<std::string> county_ids) {
  if (edge_list.empty()) throw InputError("adjacency list contains no edges");
  std::unordered_map<std::string, int> index;
  for (std::size_t i = 0; i < county_ids.size(); ++i) {
    if (!index.emplace(county_ids[i], static_cast<int>(i)).second)
      throw InputError("duplicate county id '" + county_ids[i] + "'");
  }
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(edge_list.size());
  for (std::size_t k = 0; k < edge_list.size(); ++k) {
    const auto& r = edge_list[k];
    if (r.a == r.b) throw InputError("self-loop at " + detail::record_context(r, k));
    auto ia = index.find(r.a);
    auto ib = index.find(r.b);
    if (ia == index.end() || ib == index.end()) {
      const std::string& bad = ia == index.end() ? r.a : r.b;
      throw InputError("unknown county id '" + bad + "' at " + detail::record_context(r, k));
    }
    pairs.emplace_back(ia->second, ib->second);
  }
  return graph_from_index_pairs(std::move(county_ids), pairs);
}

/// Build a graph whose counties are exactly the ids named by the edges,
/// indexed in order of first appearance.
inline AdjacencyGraph build_graph(std::span<const EdgeRecord> edge_list) {
  std::vector<std::string> ids;
  std::unordered_map<std::string, int> seen;
  for (const auto& r : edge_list) {
    for (const std::string* id : {&r.a, &r.b})
      if (seen.emplace(*id, static_cast<int>(ids.size())).second) ids.push_back(*id);
  }
  return build_graph(edge_list, std::move(ids));
}

/// Read a two-column neighbor file. The first non-comment line is a header;
/// lines starting with '#' and blank lines are skipped. Fields may be
/// separated by a comma, tab or spaces.
inline std::vector<EdgeRecord> read_adjacency_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open adjacency file '" + path + "'");
  std::vector<EdgeRecord> out;
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    for (char& c : line)
      if (c == ',' || c == '\t') c = ' ';
    std::istringstream fields(line);
    EdgeRecord r;
    std::string extra;
    if (!(fields >> r.a >> r.b) || (fields >> extra))
      throw InputError(path + ": line " + std::to_string(lineno) + ": expected two county ids");
    r.line = lineno;
    out.push_back(std::move(r));
  }
  if (!header_seen) throw InputError(path + ": missing header line");
  return out;
}

/// Moran operator P A P v with P = I - 11'/n, applied matrix-free.
inline Eigen::VectorXd moran_operator_apply(const AdjacencyGraph& graph, const Eigen::VectorXd& v) {
  const auto n = static_cast<Eigen::Index>(graph.n_counties());
  if (v.size() != n)
    throw StructuralError("moran operator: vector length " + std::to_string(v.size()) +
                          " does not match " + std::to_string(n) + " counties");
  if (n == 0) return {};
  const Eigen::VectorXd centered = v.array() - v.mean();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  for (auto [i, j] : graph.edges) {
    out[i] += centered[j];
    out[j] += centered[i];
  }
  out.array() -= out.mean();
  return out;
}

} // namespace zinbsf
