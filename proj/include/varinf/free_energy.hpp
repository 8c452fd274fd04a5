#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "varinf/exact_oracle.hpp"
#include "varinf/graph_model.hpp"

namespace varinf {

/// Interior margin used when a computed xi lands on the polytope boundary.
inline constexpr double kBoxGuard = 1e-12;

/// Entropy weights: one per edge (c_ij) and one per node (c_i).
struct CountingNumbers {
  std::vector<double> pair;
  std::vector<double> node;

  /// c_i = 1 - sum_j c_ij for every node.
  bool variable_valid(const Graph& g, double tol = 1e-10) const {
    for (std::size_t i = 0; i < g.node_count(); ++i) {
      double s = 0.0;
      for (const auto& inc : g.neighbors(i)) s += pair[inc.edge];
      if (std::abs(node[i] - (1.0 - s)) > tol) return false;
    }
    return true;
  }

  double mean_pair() const {
    if (pair.empty()) return 1.0;
    double s = 0.0;
    for (double c : pair) s += c;
    return s / static_cast<double>(pair.size());
  }

  friend bool operator==(const CountingNumbers&, const CountingNumbers&) = default;
};

/// Multipliers on the model potentials: zeta_ij * J_ij and zeta_i * theta_i.
struct ScaleFactors {
  std::vector<double> pair;
  std::vector<double> node;
};

inline CountingNumbers bethe_counting(const Graph& g) {
  CountingNumbers c;
  c.pair.assign(g.edge_count(), 1.0);
  c.node.resize(g.node_count());
  for (std::size_t i = 0; i < g.node_count(); ++i)
    c.node[i] = 1.0 - static_cast<double>(g.degree(i));
  return c;
}

/// Shared pairwise number c with variable-valid local numbers c_i = 1 - c d_i.
inline CountingNumbers uniform_counting(const Graph& g, double c) {
  if (!(c > 0.0) || !std::isfinite(c)) throw std::invalid_argument("counting number must be positive");
  CountingNumbers out;
  out.pair.assign(g.edge_count(), c);
  out.node.resize(g.node_count());
  for (std::size_t i = 0; i < g.node_count(); ++i)
    out.node[i] = 1.0 - c * static_cast<double>(g.degree(i));
  return out;
}

/// All pairwise factors equal to zeta, all local factors one.
inline ScaleFactors uniform_scale(const Graph& g, double zeta) {
  return {std::vector<double>(g.edge_count(), zeta), std::vector<double>(g.node_count(), 1.0)};
}

/// A model with the counting numbers and scale factors that select one
/// member of the generalized pairwise free-energy family.
class FreeEnergySpec {
 public:
  FreeEnergySpec(IsingModel model, CountingNumbers counting, ScaleFactors scale)
      : model_(std::move(model)), counting_(std::move(counting)), scale_(std::move(scale)) {
    const auto n = model_.node_count();
    const auto m = model_.edge_count();
    if (counting_.pair.size() != m || counting_.node.size() != n)
      throw std::invalid_argument("counting numbers do not match the graph");
    if (scale_.pair.size() != m || scale_.node.size() != n)
      throw std::invalid_argument("scale factors do not match the graph");
    for (double c : counting_.pair)
      if (!(c > 0.0) || !std::isfinite(c))
        throw std::invalid_argument("pairwise counting numbers must be positive and finite");
    for (double c : counting_.node)
      if (!std::isfinite(c)) throw std::invalid_argument("local counting numbers must be finite");
    for (double z : scale_.pair)
      if (!std::isfinite(z)) throw std::invalid_argument("scale factors must be finite");
    for (double z : scale_.node)
      if (!std::isfinite(z)) throw std::invalid_argument("scale factors must be finite");
  }

  static FreeEnergySpec bethe(const IsingModel& m) {
    return {m, bethe_counting(m.graph), uniform_scale(m.graph, 1.0)};
  }
  static FreeEnergySpec with_counting(const IsingModel& m, CountingNumbers c) {
    return {m, std::move(c), uniform_scale(m.graph, 1.0)};
  }
  static FreeEnergySpec with_zeta(const IsingModel& m, double zeta) {
    return {m, bethe_counting(m.graph), uniform_scale(m.graph, zeta)};
  }

  const IsingModel& model() const noexcept { return model_; }
  const Graph& graph() const noexcept { return model_.graph; }
  const CountingNumbers& counting() const noexcept { return counting_; }
  const ScaleFactors& scale() const noexcept { return scale_; }
  std::size_t node_count() const noexcept { return model_.node_count(); }

  double scaled_coupling(std::size_t e) const { return scale_.pair[e] * model_.coupling[e]; }
  double scaled_field(std::size_t i) const { return scale_.node[i] * model_.field[i]; }

 private:
  IsingModel model_;
  CountingNumbers counting_;
  ScaleFactors scale_;
};

/// A point (q; xi) of the reparameterized local polytope.
struct PseudoMarginals {
  std::vector<double> q;   // q_i = p(x_i = +1)
  std::vector<double> xi;  // xi_ij = p(x_i = +1, x_j = +1)
};

inline double xi_lower(double qi, double qj) { return std::max(0.0, qi + qj - 1.0); }
inline double xi_upper(double qi, double qj) { return std::min(qi, qj); }

inline bool in_box(double qi, double qj, double xi) {
  return qi > 0.0 && qi < 1.0 && qj > 0.0 && qj < 1.0 && xi > 0.0 && qi - xi > 0.0 &&
         qj - xi > 0.0 && (1.0 - qi) - (qj - xi) > 0.0;
}

inline bool in_box(const Graph& g, const PseudoMarginals& p) {
  if (p.q.size() != g.node_count() || p.xi.size() != g.edge_count()) return false;
  for (double v : p.q)
    if (!(v > 0.0 && v < 1.0)) return false;
  for (std::size_t k = 0; k < g.edge_count(); ++k) {
    const auto& e = g.edge(k);
    if (!in_box(p.q[e.i], p.q[e.j], p.xi[k])) return false;
  }
  return true;
}

namespace detail {

/// Moves xi by single ulps until all four table cells, computed the way
/// every consumer computes them, are strictly positive.
inline double nudge_inside(double qi, double qj, double xi) {
  const double lo = xi_lower(qi, qj);
  const double hi = xi_upper(qi, qj);
  if (!(xi > lo)) xi = lo;
  if (!(xi < hi)) xi = hi;
  double step = 0.0;
  int dir = 0;
  for (int k = 0; k < 4096; ++k) {
    int want = 0;
    if (!(xi > 0.0) || !((1.0 - qi) - (qj - xi) > 0.0)) {
      want = 1;
    } else if (!(qi - xi > 0.0) || !(qj - xi > 0.0)) {
      want = -1;
    }
    if (want == 0) return xi;
    if (want != dir) step = 0.0;
    dir = want;
    const double next = want > 0 ? std::nextafter(xi + step, 1.0) : std::nextafter(xi - step, 0.0);
    step = 2.0 * std::abs(next - xi);
    xi = next;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

namespace detail {

/// Cells of the stationary table for alpha >= 0, where the off-diagonal
/// cells are the small ones. The complements ci = 1 - qi, cj = 1 - qj are
/// passed in so that a flipped variable keeps full precision.
///
/// With qi >= qj the cell v = p(-+) solves alpha v^2 + (1 + alpha d) v - qj ci = 0,
/// d = qi - qj, whose coefficients are all nonnegative; the root is taken in
/// rationalized form (divided through by alpha when alpha > 1).
inline PairTable attractive_cells(double qi, double ci, double qj, double cj, double alpha) {
  const bool swap = qi < qj;
  if (swap) {
    std::swap(qi, qj);
    std::swap(ci, cj);
  }
  const double d = std::max(qi, qj) <= 0.5 ? qi - qj : cj - ci;
  const double k = qj * ci;
  double v;
  if (alpha <= 1.0) {
    const double b = 1.0 + alpha * d;
    v = 2.0 * k / (b + std::sqrt(b * b + 4.0 * alpha * k));
  } else {
    const double beta = 1.0 / alpha;
    const double b = beta + d;
    const double den = b + std::sqrt(b * b + 4.0 * beta * k);
    v = den > 0.0 ? 2.0 * beta * k / den : 0.0;
  }
  const double pp = qj - v;
  const double big = d + v;
  const double mm = ci - v;
  return swap ? PairTable{pp, v, big, mm} : PairTable{pp, big, v, mm};
}

}  // namespace detail

/// Table (++, +-, -+, --) at the unique stationary xi of a single edge term
/// for fixed (q_i, q_j). Stationarity means p(++) p(--) = r p(+-) p(-+) with
/// r = exp(4 zeta J / c).
///
/// For r >= 1 the two off-diagonal cells are the small ones and are solved
/// for directly, so a cell of size exp(-4 zeta J / c) keeps full relative
/// precision instead of being lost in xi - q_j. For r < 1 the second
/// variable is flipped (q_j <-> 1 - q_j, J <-> -J), which exchanges the
/// diagonal and off-diagonal cells.
inline PairTable manifold_cells(double qi, double qj, double coupling, double c_pair, double z_pair) {
  const double x = 4.0 * z_pair * coupling / c_pair;
  if (x >= 0.0) return detail::attractive_cells(qi, 1.0 - qi, qj, 1.0 - qj, std::expm1(x));
  const auto f = detail::attractive_cells(qi, 1.0 - qi, 1.0 - qj, qj, std::expm1(-x));
  return {f[1], f[0], f[3], f[2]};
}

/// The unique stationary xi of a single edge term for fixed (q_i, q_j):
/// root of alpha xi^2 - Q xi + (1 + alpha) q_i q_j with
/// alpha = exp(4 zeta J / c) - 1 and Q = 1 + alpha (q_i + q_j), i.e. the
/// (++) cell of manifold_cells. A result that rounds onto the boundary is
/// moved inward by the smallest representable amount.
inline double xi_star(double qi, double qj, double coupling, double c_pair, double z_pair) {
  return detail::nudge_inside(qi, qj, manifold_cells(qi, qj, coupling, c_pair, z_pair)[0]);
}

enum class BoxCheck { strict, guarded };

/// Table cells (++, +-, -+, --) in terms of (q_i, q_j, xi).
inline PairTable pairwise_table(double qi, double qj, double xi, BoxCheck check = BoxCheck::strict) {
  if (check == BoxCheck::strict) {
    if (!in_box(qi, qj, xi)) throw std::domain_error("pseudo-marginals outside the local polytope");
  } else {
    if (!(qi > 0.0 && qi < 1.0 && qj > 0.0 && qj < 1.0))
      throw std::domain_error("singleton pseudo-marginal outside (0, 1)");
    const double lo = xi_lower(qi, qj);
    const double hi = xi_upper(qi, qj);
    if (xi < lo - kBoxGuard || xi > hi + kBoxGuard)
      throw std::domain_error("pairwise pseudo-marginal outside the guarded polytope");
    const double margin = std::min(kBoxGuard, 0.25 * (hi - lo));
    xi = std::clamp(xi, lo + margin, hi - margin);
  }
  return {xi, qi - xi, qj - xi, (1.0 - qi) - (qj - xi)};
}

namespace detail {

inline double neg_xlogx(double p) { return p > 0.0 ? -p * std::log(p) : 0.0; }

inline double pair_entropy(const PairTable& t) {
  return neg_xlogx(t[0]) + neg_xlogx(t[1]) + neg_xlogx(t[2]) + neg_xlogx(t[3]);
}

inline double node_entropy(double q) { return neg_xlogx(q) + neg_xlogx(1.0 - q); }

}  // namespace detail

/// F = average (scaled) energy - (sum c_ij S_ij + sum c_i S_i).
inline double evaluate(const FreeEnergySpec& spec, const PseudoMarginals& point) {
  const auto& g = spec.graph();
  if (!in_box(g, point)) throw std::domain_error("point violates the local-polytope constraints");
  const auto& c = spec.counting();
  double energy = 0.0;
  double entropy = 0.0;
  for (std::size_t k = 0; k < g.edge_count(); ++k) {
    const auto& e = g.edge(k);
    const double qi = point.q[e.i];
    const double qj = point.q[e.j];
    const double xi = point.xi[k];
    energy -= (1.0 + 2.0 * (2.0 * xi - qi - qj)) * spec.scaled_coupling(k);
    entropy += c.pair[k] * detail::pair_entropy(pairwise_table(qi, qj, xi));
  }
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    energy += (1.0 - 2.0 * point.q[i]) * spec.scaled_field(i);
    entropy += c.node[i] * detail::node_entropy(point.q[i]);
  }
  return energy - entropy;
}

/// (q; xi*(q)), the point of the submanifold above q.
inline PseudoMarginals manifold_point(const FreeEnergySpec& spec, std::span<const double> q) {
  const auto& g = spec.graph();
  PseudoMarginals p{std::vector<double>(q.begin(), q.end()), std::vector<double>(g.edge_count())};
  for (std::size_t k = 0; k < g.edge_count(); ++k) {
    const auto& e = g.edge(k);
    p.xi[k] = xi_star(q[e.i], q[e.j], spec.model().coupling[k], spec.counting().pair[k],
                      spec.scale().pair[k]);
  }
  return p;
}

/// F at (q; xi*(q)). The energy and entropy are taken from manifold_cells,
/// so strongly coupled edges keep their tiny cells exactly.
inline double evaluate_on_manifold(const FreeEnergySpec& spec, std::span<const double> q) {
  const auto& g = spec.graph();
  const auto& c = spec.counting();
  double energy = 0.0;
  double entropy = 0.0;
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    if (!(q[i] > 0.0 && q[i] < 1.0)) throw std::domain_error("singleton pseudo-marginal outside (0, 1)");
    energy += (1.0 - 2.0 * q[i]) * spec.scaled_field(i);
    entropy += c.node[i] * detail::node_entropy(q[i]);
  }
  for (std::size_t k = 0; k < g.edge_count(); ++k) {
    const auto& e = g.edge(k);
    const auto t = manifold_cells(q[e.i], q[e.j], spec.model().coupling[k], c.pair[k], spec.scale().pair[k]);
    energy -= (1.0 - 2.0 * (t[1] + t[2])) * spec.scaled_coupling(k);
    entropy += c.pair[k] * detail::pair_entropy(t);
  }
  return energy - entropy;
}

/// dF/dq_i restricted to the submanifold xi = xi*(q).
inline void gradient_on_manifold(const FreeEnergySpec& spec, std::span<const double> q,
                                 std::span<double> grad) {
  const auto& g = spec.graph();
  const auto& c = spec.counting();
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    const double qi = q[i];
    grad[i] = -2.0 * spec.scaled_field(i) + c.node[i] * (std::log(qi) - std::log1p(-qi));
  }
  constexpr double tiny = std::numeric_limits<double>::min();
  for (std::size_t k = 0; k < g.edge_count(); ++k) {
    const auto& e = g.edge(k);
    const auto t = manifold_cells(q[e.i], q[e.j], spec.model().coupling[k], c.pair[k], spec.scale().pair[k]);
    const double log_mm = std::log(std::max(t[3], tiny));
    const double zj = 2.0 * spec.scaled_coupling(k);
    grad[e.i] += zj + c.pair[k] * (std::log(std::max(t[1], tiny)) - log_mm);
    grad[e.j] += zj + c.pair[k] * (std::log(std::max(t[2], tiny)) - log_mm);
  }
}

inline std::vector<double> gradient_on_manifold(const FreeEnergySpec& spec, std::span<const double> q) {
  std::vector<double> grad(q.size());
  gradient_on_manifold(spec, q, grad);
  return grad;
}

/// -F(q, xi*(q)); approximates log Z at a minimizer.
inline double estimate_log_partition(const FreeEnergySpec& spec, std::span<const double> q_min) {
  return -evaluate_on_manifold(spec, q_min);
}

/// Pairwise tables implied by (q; xi*(q)).
inline std::vector<PairTable> manifold_tables(const FreeEnergySpec& spec, std::span<const double> q) {
  std::vector<PairTable> out(spec.graph().edge_count());
  for (std::size_t k = 0; k < out.size(); ++k) {
    const auto& e = spec.graph().edge(k);
    out[k] = manifold_cells(q[e.i], q[e.j], spec.model().coupling[k], spec.counting().pair[k],
                            spec.scale().pair[k]);
  }
  return out;
}

}  // namespace varinf
