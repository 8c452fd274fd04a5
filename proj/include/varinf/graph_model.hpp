#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "varinf/errors.hpp"
#include "varinf/rng.hpp"

namespace varinf {

struct Edge {
  std::size_t i = 0;
  std::size_t j = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// One neighbor of a node together with the index of the connecting edge.
struct Incidence {
  std::size_t node = 0;
  std::size_t edge = 0;
};

/// Undirected simple graph on nodes 0..N-1. Edges are stored canonically
/// (i < j) in insertion order; the edge index keys every per-edge array.
class Graph {
 public:
  Graph() = default;

  explicit Graph(std::size_t node_count, std::vector<Edge> edges = {})
      : node_count_(node_count), edges_(std::move(edges)), adjacency_(node_count) {
    if (node_count_ == 0) throw std::invalid_argument("graph needs at least one node");
    std::vector<std::pair<std::size_t, std::size_t>> seen;
    seen.reserve(edges_.size());
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      auto& edge = edges_[e];
      if (edge.i == edge.j) throw std::invalid_argument("self-loop on node " + std::to_string(edge.i));
      if (edge.i > edge.j) std::swap(edge.i, edge.j);
      if (edge.j >= node_count_) throw std::invalid_argument("edge endpoint out of range");
      seen.emplace_back(edge.i, edge.j);
      adjacency_[edge.i].push_back({edge.j, e});
      adjacency_[edge.j].push_back({edge.i, e});
    }
    std::sort(seen.begin(), seen.end());
    if (std::adjacent_find(seen.begin(), seen.end()) != seen.end())
      throw std::invalid_argument("duplicate edge");
  }

  std::size_t node_count() const noexcept { return node_count_; }
  std::size_t edge_count() const noexcept { return edges_.size(); }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const Edge& edge(std::size_t e) const { return edges_[e]; }
  const std::vector<Incidence>& neighbors(std::size_t i) const { return adjacency_[i]; }
  std::size_t degree(std::size_t i) const { return adjacency_[i].size(); }

  /// Edge index of {i, j}, or edge_count() if absent.
  std::size_t find_edge(std::size_t i, std::size_t j) const {
    if (i >= node_count_ || j >= node_count_) return edges_.size();
    for (const auto& inc : adjacency_[i])
      if (inc.node == j) return inc.edge;
    return edges_.size();
  }

  /// Component label per node; labels are 0..k-1 in order of first node.
  std::vector<std::size_t> components() const {
    constexpr auto unset = static_cast<std::size_t>(-1);
    std::vector<std::size_t> label(node_count_, unset);
    std::size_t next = 0;
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < node_count_; ++s) {
      if (label[s] != unset) continue;
      label[s] = next;
      stack.push_back(s);
      while (!stack.empty()) {
        const auto u = stack.back();
        stack.pop_back();
        for (const auto& inc : adjacency_[u]) {
          if (label[inc.node] == unset) {
            label[inc.node] = next;
            stack.push_back(inc.node);
          }
        }
      }
      ++next;
    }
    return label;
  }

  std::size_t component_count() const {
    const auto label = components();
    return label.empty() ? 0 : *std::max_element(label.begin(), label.end()) + 1;
  }

  /// True iff the graph has no cycles (a forest).
  bool is_forest() const { return edges_.size() + component_count() == node_count_; }

  friend bool operator==(const Graph& a, const Graph& b) {
    return a.node_count_ == b.node_count_ && a.edges_ == b.edges_;
  }

 private:
  std::size_t node_count_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<Incidence>> adjacency_;
};

/// Structural self-check; returns an empty string when every invariant holds.
inline std::string check_well_formed(const Graph& g) {
  std::size_t degree_sum = 0;
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    degree_sum += g.degree(i);
    for (const auto& inc : g.neighbors(i)) {
      const auto& e = g.edge(inc.edge);
      if (!((e.i == i && e.j == inc.node) || (e.j == i && e.i == inc.node)))
        return "adjacency entry of node " + std::to_string(i) + " disagrees with edge list";
    }
  }
  if (degree_sum != 2 * g.edge_count()) return "degree sum is not twice the edge count";
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (const auto& e : g.edges()) {
    if (!(e.i < e.j)) return "edge not canonical";
    if (e.j >= g.node_count()) return "edge endpoint out of range";
    pairs.emplace_back(e.i, e.j);
  }
  std::sort(pairs.begin(), pairs.end());
  if (std::adjacent_find(pairs.begin(), pairs.end()) != pairs.end()) return "duplicate edge";
  return {};
}

/// Binary pairwise model with energy E(x) = -sum J_ij x_i x_j - sum theta_i x_i
/// over x in {-1,+1}^N.
struct IsingModel {
  Graph graph;
  std::vector<double> coupling;  // J, one per edge
  std::vector<double> field;     // theta, one per node

  IsingModel() = default;
  IsingModel(Graph g, std::vector<double> j, std::vector<double> theta)
      : graph(std::move(g)), coupling(std::move(j)), field(std::move(theta)) {
    if (coupling.size() != graph.edge_count())
      throw std::invalid_argument("one coupling per edge required");
    if (field.size() != graph.node_count())
      throw std::invalid_argument("one field per node required");
    for (double v : coupling)
      if (!std::isfinite(v)) throw std::invalid_argument("non-finite coupling");
    for (double v : field)
      if (!std::isfinite(v)) throw std::invalid_argument("non-finite field");
  }

  std::size_t node_count() const noexcept { return graph.node_count(); }
  std::size_t edge_count() const noexcept { return graph.edge_count(); }

  bool attractive() const {
    return std::all_of(coupling.begin(), coupling.end(), [](double j) { return j > 0.0; });
  }

  /// E(x) for spins given as +-1.
  double energy(std::span<const int> spins) const {
    double e = 0.0;
    for (std::size_t k = 0; k < edge_count(); ++k) {
      const auto& ed = graph.edge(k);
      e -= coupling[k] * spins[ed.i] * spins[ed.j];
    }
    for (std::size_t i = 0; i < node_count(); ++i) e -= field[i] * spins[i];
    return e;
  }

  friend bool operator==(const IsingModel&, const IsingModel&) = default;
};

inline Graph make_complete(std::size_t n) {
  if (n == 0) throw std::invalid_argument("complete graph needs n >= 1");
  std::vector<Edge> edges;
  edges.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) edges.push_back({i, j});
  return Graph(n, std::move(edges));
}

/// 4-neighbor lattice, node index r * cols + c.
inline Graph make_grid(std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) throw std::invalid_argument("grid dimensions must be positive");
  std::vector<Edge> edges;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const auto v = r * cols + c;
      if (c + 1 < cols) edges.push_back({v, v + 1});
      if (r + 1 < rows) edges.push_back({v, v + cols});
    }
  }
  return Graph(rows * cols, std::move(edges));
}

/// G(n, p). Disconnected samples are kept.
inline Graph make_erdos_renyi(std::size_t n, double p, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("random graph needs n >= 1");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("edge probability must lie in [0, 1]");
  Rng rng(seed);
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.bernoulli(p)) edges.push_back({i, j});
  return Graph(n, std::move(edges));
}

/// Uniform random tree on n nodes (each node attaches to a uniformly chosen
/// earlier node of a random permutation).
inline Graph make_random_tree(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("tree needs n >= 1");
  Rng rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<Edge> edges;
  for (std::size_t k = 1; k < n; ++k) {
    const auto parent = order[rng.below(k)];
    edges.push_back({std::min(order[k], parent), std::max(order[k], parent)});
  }
  return Graph(n, std::move(edges));
}

/// J_ij ~ U(j_low, j_high), theta_i ~ U(-w, w), i.i.d.
inline IsingModel sample_ising(const Graph& graph, double j_low, double j_high,
                               double theta_half_width, std::uint64_t seed) {
  if (!(j_low < j_high)) throw std::invalid_argument("coupling range must satisfy j_low < j_high");
  if (!(theta_half_width >= 0.0)) throw std::invalid_argument("field half-width must be >= 0");
  Rng rng(seed);
  std::vector<double> j(graph.edge_count());
  for (auto& v : j) v = rng.uniform(j_low, j_high);
  std::vector<double> theta(graph.node_count(), 0.0);
  if (theta_half_width > 0.0)
    for (auto& v : theta) v = rng.uniform(-theta_half_width, theta_half_width);
  return IsingModel(graph, std::move(j), std::move(theta));
}

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// Text form: `ising N E`, N `node i theta` lines, E `edge i j J` lines.
inline std::string serialize_model(const IsingModel& m) {
  std::string out = "ising " + std::to_string(m.node_count()) + " " +
                    std::to_string(m.edge_count()) + "\n";
  for (std::size_t i = 0; i < m.node_count(); ++i)
    out += "node " + std::to_string(i) + " " + detail::format_double(m.field[i]) + "\n";
  for (std::size_t k = 0; k < m.edge_count(); ++k) {
    const auto& e = m.graph.edge(k);
    out += "edge " + std::to_string(e.i) + " " + std::to_string(e.j) + " " +
           detail::format_double(m.coupling[k]) + "\n";
  }
  return out;
}

namespace detail {

struct LineReader {
  std::istringstream in;
  std::size_t line_no = 0;

  explicit LineReader(const std::string& text) : in(text) {}

  /// Next non-blank line split into whitespace tokens; false at EOF.
  bool next(std::vector<std::string>& tokens) {
    std::string line;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      std::istringstream ls(line);
      tokens.clear();
      for (std::string t; ls >> t;) tokens.push_back(t);
      if (!tokens.empty() && tokens[0][0] != '#') return true;
    }
    return false;
  }
};

inline std::size_t parse_index(const std::string& s, std::size_t line, const char* field) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    if (!s.empty() && s[0] == '-') throw std::invalid_argument("negative");
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    throw ParseError(line, field, "expected a non-negative integer, got '" + s + "'");
  }
  if (pos != s.size()) throw ParseError(line, field, "trailing characters in '" + s + "'");
  return static_cast<std::size_t>(v);
}

inline double parse_real(const std::string& s, std::size_t line, const char* field) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw ParseError(line, field, "expected a real number, got '" + s + "'");
  }
  if (pos != s.size()) throw ParseError(line, field, "trailing characters in '" + s + "'");
  if (!std::isfinite(v)) throw ParseError(line, field, "value must be finite");
  return v;
}

}  // namespace detail

inline IsingModel parse_model(const std::string& text) {
  detail::LineReader reader(text);
  std::vector<std::string> tok;
  if (!reader.next(tok)) throw ParseError(reader.line_no, "header", "empty input");
  if (tok.size() != 3 || tok[0] != "ising")
    throw ParseError(reader.line_no, "header", "expected 'ising N E'");
  const auto n = detail::parse_index(tok[1], reader.line_no, "N");
  const auto m = detail::parse_index(tok[2], reader.line_no, "E");
  if (n == 0) throw ParseError(reader.line_no, "N", "node count must be positive");

  std::vector<double> theta(n, 0.0);
  std::vector<bool> seen(n, false);
  for (std::size_t k = 0; k < n; ++k) {
    if (!reader.next(tok)) throw ParseError(reader.line_no + 1, "node", "missing node line");
    if (tok[0] != "node" || tok.size() != 3)
      throw ParseError(reader.line_no, "node", "expected 'node i theta'");
    const auto i = detail::parse_index(tok[1], reader.line_no, "i");
    if (i >= n) throw ParseError(reader.line_no, "i", "node index out of range");
    if (seen[i]) throw ParseError(reader.line_no, "i", "duplicate node");
    seen[i] = true;
    theta[i] = detail::parse_real(tok[2], reader.line_no, "theta");
  }

  std::vector<Edge> edges;
  std::vector<double> j;
  std::map<std::pair<std::size_t, std::size_t>, bool> present;
  for (std::size_t k = 0; k < m; ++k) {
    if (!reader.next(tok)) throw ParseError(reader.line_no + 1, "edge", "missing edge line");
    if (tok[0] != "edge" || tok.size() != 4)
      throw ParseError(reader.line_no, "edge", "expected 'edge i j J'");
    const auto a = detail::parse_index(tok[1], reader.line_no, "i");
    const auto b = detail::parse_index(tok[2], reader.line_no, "j");
    if (a >= n) throw ParseError(reader.line_no, "i", "edge endpoint is not a node");
    if (b >= n) throw ParseError(reader.line_no, "j", "edge endpoint is not a node");
    if (!(a < b)) throw ParseError(reader.line_no, "j", "edge must satisfy i < j");
    if (present[{a, b}]) throw ParseError(reader.line_no, "j", "duplicate edge");
    present[{a, b}] = true;
    edges.push_back({a, b});
    j.push_back(detail::parse_real(tok[3], reader.line_no, "J"));
  }
  if (reader.next(tok)) throw ParseError(reader.line_no, tok[0], "unexpected extra line");
  return IsingModel(Graph(n, std::move(edges)), std::move(j), std::move(theta));
}

}  // namespace varinf
