#pragma once

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "varinf/free_energy.hpp"
#include "varinf/rng.hpp"

namespace varinf {

struct FminConfig {
  double grad_tol = 1e-6;
  std::size_t max_iters = 2000;
  double wolfe_c1 = 1e-4;
  double wolfe_c2 = 0.9;
  double projection_shrink = 0.9;
  double wolfe_expand = 1.1;
  std::size_t line_search_iters = 100;
  /// First trial step of the line search. When random_initial_step is set the
  /// first trial is drawn uniformly from (0, 1) instead.
  double initial_step = 1.0;
  bool random_initial_step = false;
  std::size_t restarts = 5;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(wolfe_c1 > 0.0 && wolfe_c1 < wolfe_c2 && wolfe_c2 < 1.0))
      throw std::invalid_argument("Wolfe constants must satisfy 0 < c1 < c2 < 1");
    if (!(projection_shrink > 0.0 && projection_shrink < 1.0))
      throw std::invalid_argument("projection shrink factor must lie in (0, 1)");
    if (!(wolfe_expand > 1.0)) throw std::invalid_argument("Wolfe expansion factor must exceed 1");
    if (!(grad_tol > 0.0)) throw std::invalid_argument("gradient tolerance must be positive");
    if (!(initial_step > 0.0 && initial_step <= 1.0))
      throw std::invalid_argument("initial step must lie in (0, 1]");
    if (restarts == 0) throw std::invalid_argument("at least one restart is required");
  }
};

struct FminResult {
  std::vector<double> q_min;
  double f_value = std::numeric_limits<double>::infinity();
  double grad_norm = std::numeric_limits<double>::infinity();
  std::size_t iterations = 0;
  bool converged = false;
  std::size_t restart_index = 0;
  std::size_t failed_restarts = 0;
};

/// Anything with value(x), gradient(x, g) and feasible(x).
template <typename F>
concept Objective = requires(const F& f, std::span<const double> x, std::span<double> g) {
  { f.value(x) } -> std::convertible_to<double>;
  f.gradient(x, g);
  { f.feasible(x) } -> std::convertible_to<bool>;
};

/// F(q, xi*(q)) over the open unit box, kept a guard distance from its faces.
class FreeEnergyObjective {
 public:
  explicit FreeEnergyObjective(const FreeEnergySpec& spec, double margin = kBoxGuard)
      : spec_(&spec), margin_(margin) {}

  double value(std::span<const double> q) const { return evaluate_on_manifold(*spec_, q); }
  void gradient(std::span<const double> q, std::span<double> g) const {
    gradient_on_manifold(*spec_, q, g);
  }
  bool feasible(std::span<const double> q) const {
    return std::all_of(q.begin(), q.end(),
                       [this](double v) { return v >= margin_ && v <= 1.0 - margin_; });
  }
  std::size_t dimension() const { return spec_->node_count(); }

 private:
  const FreeEnergySpec* spec_;
  double margin_;
};

struct LineSearchResult {
  double step = 0.0;
  bool sufficient_decrease = false;  // W1
  bool curvature = false;            // W2
  bool fallback = false;             // no trial satisfied W1
  std::size_t evaluations = 0;
  double f_value = 0.0;
};

struct LineSearchTrial {
  enum class Phase { initial, expand, contract };
  Phase phase = Phase::initial;
  double step = 0.0;
  double lower = 0.0;  // search interval after this trial
  double upper = 0.0;
  bool w1 = false;
  bool w2 = false;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// tail + step (head - tail), anchored at the nearer endpoint so that points
/// close to a feasible head do not round onto the boundary.
inline void segment_point(std::span<const double> tail, std::span<const double> head, double step,
                          std::span<double> out) {
  if (step <= 0.5) {
    for (std::size_t i = 0; i < tail.size(); ++i) out[i] = tail[i] + step * (head[i] - tail[i]);
  } else {
    for (std::size_t i = 0; i < tail.size(); ++i) out[i] = head[i] + (1.0 - step) * (tail[i] - head[i]);
  }
}

}  // namespace detail

/// Step along d = head - tail satisfying the weak Wolfe conditions
///   W1: f(tail + r d) <= f(tail) + c1 r d'grad f(tail)
///   W2: d'grad f(tail + r d) >= c2 d'grad f(tail).
/// Expansion multiplies the step by wolfe_expand while W1 holds and W2
/// fails (never beyond 1, the head itself); otherwise the bracket (l, r) is
/// contracted with seeded picks from its middle half, r <- step on a W1
/// failure and l <- step on a W2 failure.
///
/// W1 is tested with an allowance of a few ulps of |f(tail)| so that
/// roundoff in f near a minimizer is not mistaken for an increase.
template <Objective F>
LineSearchResult wolfe_line_search(const F& f, std::span<const double> tail,
                                   std::span<const double> head, const FminConfig& cfg, Rng& rng,
                                   std::vector<LineSearchTrial>* trace = nullptr) {
  const auto n = tail.size();
  std::vector<double> d(n), x(n), g(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = head[i] - tail[i];
  const double f0 = f.value(tail);
  f.gradient(tail, g);
  const double slope0 = detail::dot(d, g);
  const double allowance = 4.0 * DBL_EPSILON * std::abs(f0);

  LineSearchResult res;
  double f_at = 0.0;
  bool w1 = false;
  bool w2 = false;
  auto probe = [&](double step) {
    detail::segment_point(tail, head, step, x);
    ++res.evaluations;
    f_at = f.value(x);
    w1 = std::isfinite(f_at) && f_at <= f0 + cfg.wolfe_c1 * step * slope0 + allowance;
    if (w1) {
      f.gradient(x, g);
      w2 = detail::dot(d, g) >= cfg.wolfe_c2 * slope0;
    } else {
      w2 = false;
    }
  };
  auto record = [&](LineSearchTrial::Phase ph, double step, double lo, double hi) {
    if (trace) trace->push_back({ph, step, lo, hi, w1, w2});
  };

  double best_step = 0.0;
  double best_f = std::numeric_limits<double>::infinity();
  auto note_w1 = [&](double step) {
    if (w1 && f_at < best_f) {
      best_f = f_at;
      best_step = step;
    }
  };

  double step = cfg.random_initial_step ? rng.uniform01() : cfg.initial_step;
  probe(step);
  note_w1(step);
  record(LineSearchTrial::Phase::initial, step, 0.0, step);

  while (w1 && !w2 && step < 1.0) {
    step = std::min(1.0, step * cfg.wolfe_expand);
    probe(step);
    note_w1(step);
    record(LineSearchTrial::Phase::expand, step, 0.0, step);
  }
  if (w1 && w2) {
    res.step = step;
    res.sufficient_decrease = res.curvature = true;
    res.f_value = f_at;
    return res;
  }
  if (w1 && step >= 1.0) {
    // The whole feasible segment decreases f steeply: the head is the
    // farthest admissible point, so take it.
    res.step = 1.0;
    res.sufficient_decrease = true;
    res.f_value = f_at;
    return res;
  }

  double lo = 0.0;
  double hi = step;
  for (std::size_t it = 0; it < cfg.line_search_iters; ++it) {
    step = lo + (hi - lo) * rng.uniform(0.25, 0.75);
    probe(step);
    note_w1(step);
    if (w1 && w2) {
      record(LineSearchTrial::Phase::contract, step, lo, hi);
      res.step = step;
      res.sufficient_decrease = res.curvature = true;
      res.f_value = f_at;
      return res;
    }
    if (!w1)
      hi = step;
    else
      lo = step;
    record(LineSearchTrial::Phase::contract, step, lo, hi);
  }
  if (best_step > 0.0) {
    res.step = best_step;
    res.sufficient_decrease = true;
    res.f_value = best_f;
    return res;
  }
  res.step = 1e-8;
  res.fallback = true;
  detail::segment_point(tail, head, res.step, x);
  res.f_value = f.value(x);
  return res;
}

/// One accepted quasi-Newton iteration, for diagnostics.
struct FminIteration {
  double f_before = 0.0;
  double f_after = 0.0;
  double step = 0.0;
  double slope = 0.0;  // d' grad f at the tail, d = head - tail
  bool sufficient_decrease = false;
};

/// Projected quasi-Newton descent from a given start point.
///
/// Each iteration takes d = -B grad f, shrinks the full step by
/// projection_shrink until q + rho d is feasible, runs the Wolfe line search
/// on [q, q + rho d] and applies the BFGS inverse-Hessian update. B starts at
/// the identity and is reset to it whenever d is not a descent direction.
/// The update is skipped unless s'y > 1e-10 |s| |y|.
template <Objective F>
FminResult minimize_from(const F& f, std::span<const double> start, const FminConfig& cfg,
                         std::uint64_t seed, std::vector<FminIteration>* trace = nullptr) {
  const auto n = start.size();
  Rng rng(seed);
  FminResult res;
  std::vector<double> q(start.begin(), start.end());
  std::vector<double> g(n), g_new(n), d(n), head(n), q_new(n), s(n), y(n), by(n);
  std::vector<double> b(n * n, 0.0);
  auto reset_b = [&] {
    std::fill(b.begin(), b.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) b[i * n + i] = 1.0;
  };
  reset_b();
  bool b_is_identity = true;

  if constexpr (requires { f.dimension(); }) {
    if (n != f.dimension()) throw std::invalid_argument("start point has the wrong dimension");
  }
  if (!f.feasible(q)) throw std::invalid_argument("start point is not feasible");
  double fq = f.value(q);
  f.gradient(q, g);
  auto finite = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  if (!std::isfinite(fq) || !finite(g)) {
    res.q_min = q;
    return res;
  }

  std::size_t it = 0;
  for (; it < cfg.max_iters; ++it) {
    const double gn = detail::norm2(g);
    if (gn <= cfg.grad_tol) {
      res.converged = true;
      break;
    }
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc -= b[i * n + j] * g[j];
      d[i] = acc;
    }
    if (!(detail::dot(d, g) < 0.0)) {
      reset_b();
      b_is_identity = true;
      for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
    }

    double rho_max = 1.0;
    for (std::size_t k = 0;; ++k) {
      for (std::size_t i = 0; i < n; ++i) head[i] = q[i] + rho_max * d[i];
      if (f.feasible(head)) break;
      rho_max *= cfg.projection_shrink;
      if (k > 20000) break;
    }
    if (!f.feasible(head)) break;

    const auto ls = wolfe_line_search(f, q, head, cfg, rng);
    double slope = 0.0;
    for (std::size_t i = 0; i < n; ++i) slope += (head[i] - q[i]) * g[i];
    detail::segment_point(q, head, ls.step, q_new);
    const double f_new = f.value(q_new);
    if (!std::isfinite(f_new)) break;
    if (!ls.sufficient_decrease && f_new > fq) {
      // No acceptable step along this direction; retry steepest descent once.
      if (b_is_identity) break;
      reset_b();
      b_is_identity = true;
      continue;
    }
    f.gradient(q_new, g_new);
    if (!finite(g_new)) break;
    if (trace) trace->push_back({fq, f_new, ls.step, slope, ls.sufficient_decrease});

    double step_inf = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = q_new[i] - q[i];
      y[i] = g_new[i] - g[i];
      step_inf = std::max(step_inf, std::abs(s[i]));
    }
    const double gamma = detail::dot(s, y);
    if (gamma > 1e-10 * detail::norm2(s) * detail::norm2(y)) {
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += b[i * n + j] * y[j];
        by[i] = acc;
      }
      const double yby = detail::dot(y, by);
      const double a = (gamma + yby) / (gamma * gamma);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          b[i * n + j] += a * s[i] * s[j] - (by[i] * s[j] + s[i] * by[j]) / gamma;
      b_is_identity = false;
    }
    q.swap(q_new);
    g.swap(g_new);
    fq = f_new;
    if (step_inf == 0.0) break;
  }
  res.q_min = q;
  res.f_value = fq;
  res.grad_norm = detail::norm2(g);
  res.iterations = it;
  if (!res.converged && res.grad_norm <= cfg.grad_tol) res.converged = true;
  return res;
}

/// One run per restart from q0 ~ U(0.01, 0.99)^N with seeds derived from
/// cfg.seed, in restart order.
template <Objective F>
std::vector<FminResult> minimize_all(const F& f, std::size_t dim, const FminConfig& cfg) {
  cfg.validate();
  std::vector<FminResult> runs;
  runs.reserve(cfg.restarts);
  for (std::size_t r = 0; r < cfg.restarts; ++r) {
    Rng init(derive_seed(cfg.seed, r, 0));
    std::vector<double> q0(dim);
    for (auto& v : q0) v = init.uniform(0.01, 0.99);
    auto run = minimize_from(f, q0, cfg, derive_seed(cfg.seed, r, 1));
    run.restart_index = r;
    runs.push_back(std::move(run));
  }
  return runs;
}

/// Lowest finite f over the runs; ties go to the lowest restart index.
inline FminResult pick_best(std::vector<FminResult> runs) {
  FminResult best;
  std::size_t failed = 0;
  bool have = false;
  for (auto& r : runs) {
    if (!std::isfinite(r.f_value)) {
      ++failed;
      if (!have && best.q_min.empty()) best = r;
      continue;
    }
    if (!have || r.f_value < best.f_value) {
      best = r;
      have = true;
    }
  }
  best.failed_restarts = failed;
  if (!have) best.converged = false;
  return best;
}

inline FminResult minimize(const FreeEnergySpec& spec, const FminConfig& cfg) {
  return pick_best(minimize_all(FreeEnergyObjective(spec), spec.node_count(), cfg));
}

inline FminResult minimize_from(const FreeEnergySpec& spec, std::span<const double> start,
                                const FminConfig& cfg) {
  cfg.validate();
  return minimize_from(FreeEnergyObjective(spec), start, cfg, derive_seed(cfg.seed, 0, 1));
}

}  // namespace varinf
