#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "varinf/free_energy.hpp"
#include "varinf/graph_model.hpp"

namespace varinf {

/// Spanning-tree edge appearance probabilities under the uniform
/// distribution over spanning trees of each connected component.
///
/// For unit weights the appearance probability of edge (i, j) equals its
/// effective resistance R_ij = L+_ii + L+_jj - 2 L+_ij, where L+ is the
/// Laplacian pseudo-inverse (matrix-tree theorem). Local numbers are
/// c_i = 1 - sum_j c_ij.
inline CountingNumbers trw_counting(const Graph& g) {
  CountingNumbers c;
  c.pair.assign(g.edge_count(), 0.0);
  const auto label = g.components();
  const std::size_t k = g.component_count();

  std::vector<std::vector<std::size_t>> members(k);
  for (std::size_t i = 0; i < g.node_count(); ++i) members[label[i]].push_back(i);
  std::vector<std::size_t> local(g.node_count());

  for (const auto& nodes : members) {
    const auto n = static_cast<Eigen::Index>(nodes.size());
    if (n < 2) continue;
    for (Eigen::Index a = 0; a < n; ++a) local[nodes[static_cast<std::size_t>(a)]] = static_cast<std::size_t>(a);
    // L + 11^T/n is nonsingular on a connected component; subtracting 11^T/n
    // from its inverse leaves the pseudo-inverse.
    const double inv_n = 1.0 / static_cast<double>(n);
    Eigen::MatrixXd lap = Eigen::MatrixXd::Constant(n, n, inv_n);
    for (const auto u : nodes) {
      const auto a = static_cast<Eigen::Index>(local[u]);
      for (const auto& inc : g.neighbors(u)) {
        lap(a, a) += 1.0;
        lap(a, static_cast<Eigen::Index>(local[inc.node])) -= 1.0;
      }
    }
    const Eigen::MatrixXd pinv =
        lap.ldlt().solve(Eigen::MatrixXd::Identity(n, n)) - Eigen::MatrixXd::Constant(n, n, inv_n);
    for (const auto u : nodes) {
      for (const auto& inc : g.neighbors(u)) {
        if (inc.node < u) continue;
        const auto a = static_cast<Eigen::Index>(local[u]);
        const auto b = static_cast<Eigen::Index>(local[inc.node]);
        c.pair[inc.edge] = pinv(a, a) + pinv(b, b) - 2.0 * pinv(a, b);
      }
    }
  }
  c.node.resize(g.node_count());
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    double s = 0.0;
    for (const auto& inc : g.neighbors(i)) s += c.pair[inc.edge];
    c.node[i] = 1.0 - s;
  }
  return c;
}

/// Nonnegative allocation certifying convexity of a counting-number entropy.
/// arrow_to_i[e] is c~_{(i,j)->i} and arrow_to_j[e] is c~_{(i,j)->j} for the
/// canonical edge e = (i, j).
struct AuxiliaryNumbers {
  std::vector<double> edge;
  std::vector<double> arrow_to_i;
  std::vector<double> arrow_to_j;
  std::vector<double> node;
};

/// Counting numbers implied by an allocation:
/// c_ij = c~_ij + c~_{ij->i} + c~_{ij->j}, c_i = c~_i - sum_j c~_{ij->i}.
inline CountingNumbers counting_from_auxiliary(const Graph& g, const AuxiliaryNumbers& aux) {
  CountingNumbers c;
  c.pair.resize(g.edge_count());
  c.node = aux.node;
  for (std::size_t k = 0; k < g.edge_count(); ++k) {
    const auto& e = g.edge(k);
    c.pair[k] = aux.edge[k] + aux.arrow_to_i[k] + aux.arrow_to_j[k];
    c.node[e.i] -= aux.arrow_to_i[k];
    c.node[e.j] -= aux.arrow_to_j[k];
  }
  return c;
}

/// Checks nonnegativity, the per-node budget
/// c~_i + sum_j (c~_ij + c~_{ij->j}) = 1, and that the allocation reproduces c.
inline bool convexity_certificate(const Graph& g, const CountingNumbers& c,
                                  const AuxiliaryNumbers& aux, double tol = 1e-8) {
  auto nonneg = [tol](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [tol](double x) { return x >= -tol; });
  };
  if (!nonneg(aux.edge) || !nonneg(aux.arrow_to_i) || !nonneg(aux.arrow_to_j) || !nonneg(aux.node))
    return false;
  std::vector<double> load = aux.node;
  for (std::size_t k = 0; k < g.edge_count(); ++k) {
    const auto& e = g.edge(k);
    load[e.i] += aux.edge[k] + aux.arrow_to_j[k];
    load[e.j] += aux.edge[k] + aux.arrow_to_i[k];
  }
  for (double l : load)
    if (std::abs(l - 1.0) > tol) return false;
  const auto implied = counting_from_auxiliary(g, aux);
  for (std::size_t k = 0; k < g.edge_count(); ++k)
    if (std::abs(implied.pair[k] - c.pair[k]) > tol) return false;
  for (std::size_t i = 0; i < g.node_count(); ++i)
    if (std::abs(implied.node[i] - c.node[i]) > tol) return false;
  return true;
}

struct LsConvexResult {
  CountingNumbers counting;
  AuxiliaryNumbers aux;
  double objective = 0.0;
  double kkt_residual = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

namespace detail {

/// Euclidean projection onto {w >= 0, sum w <= 1}.
inline void project_capped_simplex(std::span<double> w) {
  double s = 0.0;
  for (auto& v : w) {
    v = std::max(v, 0.0);
    s += v;
  }
  if (s <= 1.0) return;
  // Budget active: project onto the simplex. The threshold is nonnegative,
  // so the clipped coordinates stay at zero.
  std::vector<double> sorted(w.begin(), w.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cum = 0.0;
  double tau = 0.0;
  for (std::size_t r = 0; r < sorted.size(); ++r) {
    cum += sorted[r];
    const double t = (cum - 1.0) / static_cast<double>(r + 1);
    if (sorted[r] - t > 0.0) tau = t;
  }
  for (auto& v : w) v = std::max(v - tau, 0.0);
}

}  // namespace detail

/// Least-squares-convex counting numbers: the variable-valid counting numbers
/// closest to Bethe (sum over edges of (c_ij - 1)^2) among those admitting a
/// nonnegative convexity allocation.
///
/// Moving any shared c~_ij onto the arrow c~_{ij->j} keeps c_ij and node i's
/// budget and only relaxes node j's, so the optimum is attained with
/// c~_ij = 0. The remaining variables w_{i,e} = c~_{e->other} live in one
/// capped simplex per node, which makes the projection exact; the QP is
/// solved with accelerated projected gradient (FISTA with restart).
inline LsConvexResult ls_convex_solve(const Graph& g, double tol = 1e-8,
                                      std::size_t max_iters = 100000) {
  const auto n = g.node_count();
  const auto m = g.edge_count();
  // Block offsets: node i owns slots [offset[i], offset[i] + d_i).
  std::vector<std::size_t> offset(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) offset[i + 1] = offset[i] + g.degree(i);
  std::vector<std::size_t> slot_edge(offset[n]);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t s = 0; s < g.degree(i); ++s) slot_edge[offset[i] + s] = g.neighbors(i)[s].edge;

  auto pair_sums = [&](const std::vector<double>& w) {
    std::vector<double> c(m, 0.0);
    for (std::size_t s = 0; s < w.size(); ++s) c[slot_edge[s]] += w[s];
    return c;
  };
  auto gradient = [&](const std::vector<double>& w) {
    const auto c = pair_sums(w);
    std::vector<double> grad(w.size());
    for (std::size_t s = 0; s < w.size(); ++s) grad[s] = 2.0 * (c[slot_edge[s]] - 1.0);
    return grad;
  };
  auto project = [&](std::vector<double>& w) {
    for (std::size_t i = 0; i < n; ++i)
      detail::project_capped_simplex(std::span<double>(w.data() + offset[i], g.degree(i)));
  };
  auto objective = [&](const std::vector<double>& w) {
    double f = 0.0;
    for (double c : pair_sums(w)) f += (c - 1.0) * (c - 1.0);
    return f;
  };

  const double step = 0.25;  // 1 / Lipschitz constant of the gradient
  std::vector<double> w(offset[n], 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t s = offset[i]; s < offset[i + 1]; ++s) w[s] = 1.0 / static_cast<double>(g.degree(i));
  std::vector<double> y = w;
  double t = 1.0;
  double f_prev = objective(w);

  LsConvexResult res;
  for (std::size_t it = 1; it <= max_iters; ++it) {
    auto grad = gradient(y);
    std::vector<double> next(y.size());
    for (std::size_t s = 0; s < y.size(); ++s) next[s] = y[s] - step * grad[s];
    project(next);

    const double f_next = objective(next);
    if (f_next > f_prev && t > 1.0) {  // adaptive restart
      t = 1.0;
      y = w;
      continue;
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    for (std::size_t s = 0; s < y.size(); ++s) y[s] = next[s] + ((t - 1.0) / t_next) * (next[s] - w[s]);
    w = std::move(next);
    t = t_next;
    f_prev = f_next;

    // Projected-gradient residual at the current iterate.
    grad = gradient(w);
    std::vector<double> probe(w.size());
    for (std::size_t s = 0; s < w.size(); ++s) probe[s] = w[s] - step * grad[s];
    project(probe);
    double r = 0.0;
    for (std::size_t s = 0; s < w.size(); ++s) r = std::max(r, std::abs(w[s] - probe[s]) / step);
    res.iterations = it;
    res.kkt_residual = r;
    if (r < tol) {
      res.converged = true;
      break;
    }
  }
  if (w.empty()) res.converged = true;

  res.objective = objective(w);
  res.aux.edge.assign(m, 0.0);
  res.aux.arrow_to_i.assign(m, 0.0);
  res.aux.arrow_to_j.assign(m, 0.0);
  res.aux.node.assign(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = offset[i]; s < offset[i + 1]; ++s) {
      const auto k = slot_edge[s];
      // Node i's slot is the arrow pointing at the other endpoint.
      if (g.edge(k).i == i)
        res.aux.arrow_to_j[k] = w[s];
      else
        res.aux.arrow_to_i[k] = w[s];
      res.aux.node[i] -= w[s];
    }
    res.aux.node[i] = std::max(res.aux.node[i], 0.0);
  }
  res.counting = counting_from_auxiliary(g, res.aux);
  return res;
}

inline CountingNumbers ls_convex_counting(const Graph& g) {
  auto res = ls_convex_solve(g);
  if (!res.converged)
    throw std::runtime_error("LS-convex QP did not converge: KKT residual " +
                             std::to_string(res.kkt_residual) + " after " +
                             std::to_string(res.iterations) + " iterations");
  return std::move(res.counting);
}

}  // namespace varinf
