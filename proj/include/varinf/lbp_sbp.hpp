#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "varinf/free_energy.hpp"
#include "varinf/inference_result.hpp"
#include "varinf/rng.hpp"

namespace varinf {

struct LbpConfig {
  std::size_t max_sweeps = 10000;
  double tol = 1e-10;
  /// Fraction of the old message kept on each update. Zero disables damping.
  double damping = 0.0;
  std::uint64_t seed = 0;
};

/// Log-odds messages, two per edge: index 2e is i->j and 2e+1 is j->i for
/// the canonical edge e = (i, j). m_{a->b} acts as an extra field on x_b.
struct MessageState {
  std::vector<double> message;
  std::size_t sweeps = 0;
  bool converged = false;
  double max_delta = 0.0;
};

struct LbpRun {
  MessageState state;
  InferenceResult result;
};

namespace detail {

/// log cosh x without overflow.
inline double log_cosh(double x) {
  const double a = std::abs(x);
  return a + std::log1p(std::exp(-2.0 * a)) - std::log(2.0);
}

/// Message to x_b given coupling J and cavity field h on x_a:
/// exp(2 m) = cosh(J + h) / cosh(J - h).
inline double bp_message(double coupling, double cavity) {
  return 0.5 * (log_cosh(coupling + cavity) - log_cosh(coupling - cavity));
}

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline std::vector<double> node_totals(const IsingModel& m, const std::vector<double>& msg) {
  std::vector<double> h(m.field);
  for (std::size_t k = 0; k < m.edge_count(); ++k) {
    const auto& e = m.graph.edge(k);
    h[e.j] += msg[2 * k];
    h[e.i] += msg[2 * k + 1];
  }
  return h;
}

}  // namespace detail

/// Beliefs of a message state on the zeta-scaled model.
inline InferenceResult lbp_beliefs(const IsingModel& m, double zeta, const MessageState& st) {
  InferenceResult out;
  const auto h = detail::node_totals(m, st.message);
  out.singleton.resize(m.node_count());
  for (std::size_t i = 0; i < m.node_count(); ++i) out.singleton[i] = detail::sigmoid(2.0 * h[i]);
  out.pairwise.resize(m.edge_count());
  for (std::size_t k = 0; k < m.edge_count(); ++k) {
    const auto& e = m.graph.edge(k);
    const double ci = h[e.i] - st.message[2 * k + 1];
    const double cj = h[e.j] - st.message[2 * k];
    const double jz = zeta * m.coupling[k];
    const double lw[4] = {jz + ci + cj, -jz + ci - cj, -jz - ci + cj, jz - ci - cj};
    const double top = *std::max_element(lw, lw + 4);
    double z = 0.0;
    PairTable t{};
    for (int a = 0; a < 4; ++a) {
      t[a] = std::exp(lw[a] - top);
      z += t[a];
    }
    for (auto& v : t) v /= z;
    out.pairwise[k] = t;
  }
  out.converged = st.converged;
  out.iterations = st.sweeps;
  out.zeta_final = zeta;
  const auto spec = FreeEnergySpec::with_zeta(m, zeta);
  PseudoMarginals p{out.singleton, std::vector<double>(m.edge_count())};
  for (std::size_t k = 0; k < m.edge_count(); ++k) p.xi[k] = out.pairwise[k][0];
  if (in_box(m.graph, p)) out.log_z = -evaluate(spec, p);
  return out;
}

/// Sequential belief propagation on the model with couplings zeta * J.
/// Directed edges are updated in a freshly shuffled order each sweep;
/// converged once a full sweep changes no message by more than tol.
inline LbpRun lbp_run(const IsingModel& m, double zeta, const LbpConfig& cfg,
                      const MessageState* warm = nullptr) {
  if (!(cfg.tol > 0.0)) throw std::invalid_argument("LBP tolerance must be positive");
  if (!(cfg.damping >= 0.0 && cfg.damping < 1.0)) throw std::invalid_argument("damping must lie in [0, 1)");
  const auto ne = m.edge_count();
  MessageState st;
  if (warm && warm->message.size() == 2 * ne)
    st.message = warm->message;
  else
    st.message.assign(2 * ne, 0.0);

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(2 * ne);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t sweep = 0; sweep < cfg.max_sweeps; ++sweep) {
    auto h = detail::node_totals(m, st.message);
    rng.shuffle(std::span<std::size_t>(order));
    double max_delta = 0.0;
    for (const auto dir : order) {
      const auto k = dir / 2;
      const auto& e = m.graph.edge(k);
      const bool forward = (dir % 2) == 0;
      const auto from = forward ? e.i : e.j;
      const auto to = forward ? e.j : e.i;
      const double back = st.message[forward ? 2 * k + 1 : 2 * k];
      double next = detail::bp_message(zeta * m.coupling[k], h[from] - back);
      if (cfg.damping > 0.0) next = cfg.damping * st.message[dir] + (1.0 - cfg.damping) * next;
      const double delta = next - st.message[dir];
      st.message[dir] = next;
      h[to] += delta;
      max_delta = std::max(max_delta, std::abs(delta));
    }
    st.sweeps = sweep + 1;
    st.max_delta = max_delta;
    if (!std::isfinite(max_delta)) break;
    if (max_delta <= cfg.tol) {
      st.converged = true;
      break;
    }
  }
  LbpRun run{st, lbp_beliefs(m, zeta, st)};
  if (!st.converged) run.result.flags.emplace_back("lbp_not_converged");
  return run;
}

struct UniquenessCertificate {
  double spectral_radius = 0.0;
  bool holds = true;
  bool used_dense = false;
};

namespace detail {

/// Sparse nonnegative matrix on directed edges: row (a->b) has entries
/// tanh|zeta J_bc| at columns (b->c) for every neighbor c != a of b.
struct DirectedEdgeMatrix {
  std::vector<std::vector<std::pair<std::size_t, double>>> rows;

  DirectedEdgeMatrix(const IsingModel& m, double zeta) : rows(2 * m.edge_count()) {
    const auto& g = m.graph;
    auto dir_index = [&](std::size_t from, std::size_t edge) {
      return g.edge(edge).i == from ? 2 * edge : 2 * edge + 1;
    };
    for (std::size_t k = 0; k < g.edge_count(); ++k) {
      const auto& e = g.edge(k);
      for (int side = 0; side < 2; ++side) {
        const auto a = side == 0 ? e.i : e.j;
        const auto b = side == 0 ? e.j : e.i;
        auto& row = rows[2 * k + static_cast<std::size_t>(side)];
        for (const auto& inc : g.neighbors(b)) {
          if (inc.node == a) continue;
          const double w = std::tanh(std::abs(zeta * m.coupling[inc.edge]));
          if (w > 0.0) row.emplace_back(dir_index(b, inc.edge), w);
        }
      }
    }
  }

  void apply(const std::vector<double>& x, std::vector<double>& y) const {
    for (std::size_t r = 0; r < rows.size(); ++r) {
      double s = 0.0;
      for (const auto& [c, w] : rows[r]) s += w * x[c];
      y[r] = s;
    }
  }

  Eigen::MatrixXd dense() const {
    const auto n = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (const auto& [c, w] : rows[r]) a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = w;
    return a;
  }
};

}  // namespace detail

/// Field-independent uniqueness bound: the LBP fixed point (and the minimum
/// of the Bethe-type free energy of the zeta-scaled model) is unique if the
/// spectral radius of the tanh-weighted directed-edge matrix is below one.
///
/// The radius is found by power iteration on M + I, which shares M's Perron
/// vector and is aperiodic, with Collatz-Wielandt bounds as the stopping
/// test. Stagnation falls back to a dense eigensolve for up to 200 rows.
inline UniquenessCertificate mooij_radius(const IsingModel& m, double zeta) {
  UniquenessCertificate cert;
  const detail::DirectedEdgeMatrix mat(m, zeta);
  const auto n = mat.rows.size();
  bool empty = true;
  for (const auto& r : mat.rows) empty = empty && r.empty();
  if (empty) return cert;

  std::vector<double> x(n, 1.0), y(n);
  double lower = 0.0;
  double upper = std::numeric_limits<double>::infinity();
  bool settled = false;
  for (std::size_t it = 0; it < 20000; ++it) {
    mat.apply(x, y);
    lower = std::numeric_limits<double>::infinity();
    upper = 0.0;
    double norm = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      y[r] += x[r];
      const double ratio = y[r] / x[r];
      lower = std::min(lower, ratio);
      upper = std::max(upper, ratio);
      norm = std::max(norm, y[r]);
    }
    for (std::size_t r = 0; r < n; ++r) x[r] = y[r] / norm;
    if (upper - lower <= 1e-12 * upper) {
      settled = true;
      break;
    }
    if (!std::all_of(x.begin(), x.end(), [](double v) { return v > 1e-250; })) break;
  }
  if (settled) {
    cert.spectral_radius = std::max(0.0, 0.5 * (lower + upper) - 1.0);
  } else if (n <= 200) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(mat.dense(), false);
    cert.spectral_radius = es.eigenvalues().cwiseAbs().maxCoeff();
    cert.used_dense = true;
  } else {
    cert.spectral_radius = std::max(0.0, upper - 1.0);
  }
  cert.holds = cert.spectral_radius < 1.0;
  return cert;
}

struct SbpResult {
  InferenceResult result;
  double zeta_reached = 0.0;
  std::vector<double> schedule;  // attempted zeta values, in order
  bool reached_one = false;
};

/// Self-guided BP: zeta runs over dz, 2 dz, ..., 1 with warm-started LBP and
/// stops at the first step that fails to converge. Marginals come from the
/// last converged step; the log-partition estimate is -F_Bethe of the
/// original model at (q; xi*(q)).
inline SbpResult sbp(const IsingModel& m, double delta_zeta, const LbpConfig& cfg) {
  if (!(delta_zeta > 0.0 && delta_zeta <= 1.0)) throw std::invalid_argument("delta zeta must lie in (0, 1]");
  SbpResult out;
  MessageState last;
  last.message.assign(2 * m.edge_count(), 0.0);
  last.converged = true;
  std::optional<InferenceResult> beliefs;
  std::size_t total_sweeps = 0;

  const auto steps = static_cast<std::size_t>(std::ceil(1.0 / delta_zeta - 1e-9));
  for (std::size_t k = 1; k <= steps; ++k) {
    const double zeta = k == steps ? 1.0 : static_cast<double>(k) * delta_zeta;
    out.schedule.push_back(zeta);
    LbpConfig step_cfg = cfg;
    step_cfg.seed = derive_seed(cfg.seed, k);
    auto run = lbp_run(m, zeta, step_cfg, &last);
    total_sweeps += run.state.sweeps;
    if (!run.state.converged) break;
    last = std::move(run.state);
    beliefs = std::move(run.result);
    out.zeta_reached = zeta;
  }
  out.reached_one = out.zeta_reached == 1.0;

  if (beliefs) {
    out.result = std::move(*beliefs);
  } else {
    // LBP failed at the first step: fall back to the independent model.
    MessageState zero;
    zero.message.assign(2 * m.edge_count(), 0.0);
    out.result = lbp_beliefs(m, 0.0, zero);
    out.result.flags.emplace_back("sbp_failed_first_step");
  }
  out.result.converged = out.reached_one;
  out.result.iterations = total_sweeps;
  out.result.zeta_final = out.zeta_reached;
  std::vector<double> q = out.result.singleton;
  for (auto& v : q) v = std::clamp(v, kBoxGuard, 1.0 - kBoxGuard);
  out.result.log_z = estimate_log_partition(FreeEnergySpec::bethe(m), q);
  out.result.log_z_model_modified = false;
  if (!out.reached_one) out.result.flags.emplace_back("sbp_stopped_early");
  return out;
}

}  // namespace varinf
