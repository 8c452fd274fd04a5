#include <gtest/gtest.h>

#include <cmath>

#include "varinf/counting_schemes.hpp"
#include "varinf/exact_oracle.hpp"
#include "varinf/fmin.hpp"

using namespace varinf;

namespace {

/// f on the open interval (-2, 2) from an arbitrary callable and derivative.
template <typename V, typename D>
struct OneDim {
  V v;
  D d;
  double value(std::span<const double> x) const { return v(x[0]); }
  void gradient(std::span<const double> x, std::span<double> g) const { g[0] = d(x[0]); }
  bool feasible(std::span<const double> x) const { return x[0] > -2.0 && x[0] < 2.0; }
};
template <typename V, typename D>
OneDim(V, D) -> OneDim<V, D>;

/// Separable quadratic sum a_i (x_i - b_i)^2 on the unit box.
struct BoxQuadratic {
  std::vector<double> a, b;
  double value(std::span<const double> x) const {
    double f = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) f += a[i] * (x[i] - b[i]) * (x[i] - b[i]);
    return f;
  }
  void gradient(std::span<const double> x, std::span<double> g) const {
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = 2.0 * a[i] * (x[i] - b[i]);
  }
  bool feasible(std::span<const double> x) const {
    for (double v : x)
      if (!(v > 0.0 && v < 1.0)) return false;
    return true;
  }
};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST(Config, Validation) {
  FminConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.wolfe_c1, 1e-4);
  EXPECT_EQ(c.wolfe_c2, 0.9);
  c.wolfe_c1 = 0.95;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.projection_shrink = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.wolfe_expand = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.restarts = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(LineSearch, QuadraticSanity) {
  const OneDim f{[](double x) { return x * x; }, [](double x) { return 2.0 * x; }};
  const std::vector<double> tail{1.0}, head{-1.0};
  FminConfig cfg;
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(s);
    const auto r = wolfe_line_search(f, tail, head, cfg, rng);
    EXPECT_TRUE(r.sufficient_decrease);
    EXPECT_TRUE(r.curvature);
    const double x = 1.0 - 2.0 * r.step;
    EXPECT_LT(x * x, 1.0);
    EXPECT_LE(x * x, 1.0 + cfg.wolfe_c1 * r.step * -4.0);
    EXPECT_GE(-2.0 * 2.0 * x, cfg.wolfe_c2 * -4.0);
  }
}

TEST(LineSearch, ExpandsWhileCurvatureFails) {
  // Linear descent on a long segment: W1 holds everywhere and W2 never does,
  // so the step grows by 1.1 from 0.5 until it reaches the head.
  const OneDim f{[](double x) { return -x; }, [](double) { return -1.0; }};
  const std::vector<double> tail{0.0}, head{1.0};
  FminConfig cfg;
  cfg.initial_step = 0.5;
  Rng rng(1);
  std::vector<LineSearchTrial> trace;
  const auto r = wolfe_line_search(f, tail, head, cfg, rng, &trace);
  EXPECT_EQ(r.step, 1.0);
  EXPECT_TRUE(r.sufficient_decrease);
  double expect = 0.5;
  for (std::size_t k = 1; k < trace.size(); ++k) {
    expect = std::min(1.0, expect * 1.1);
    EXPECT_EQ(trace[k].phase, LineSearchTrial::Phase::expand);
    EXPECT_DOUBLE_EQ(trace[k].step, expect);
  }
  EXPECT_EQ(trace.back().step, 1.0);
}

TEST(LineSearch, TraceMatchesHandSimulationOnNonmonotoneFunction) {
  // A bumpy descent profile: W1 fails on the bumps, W2 fails on the slopes.
  auto v = [](double x) { return -x + 0.3 * std::sin(9.0 * x) * std::sin(9.0 * x) + 0.02 * x * x; };
  auto d = [](double x) { return -1.0 + 0.3 * 18.0 * std::sin(9.0 * x) * std::cos(9.0 * x) + 0.04 * x; };
  const OneDim f{v, d};
  const std::vector<double> tail{0.0}, head{1.5};
  const FminConfig cfg;

  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    std::vector<LineSearchTrial> trace;
    const auto r = wolfe_line_search(f, tail, head, cfg, rng, &trace);

    // Independent re-simulation with the same random stream.
    Rng sim(seed);
    const double f0 = v(0.0), s0 = 1.5 * d(0.0);
    auto w1 = [&](double rho) { return v(1.5 * rho) <= f0 + cfg.wolfe_c1 * rho * s0 + 4 * DBL_EPSILON * std::abs(f0); };
    auto w2 = [&](double rho) { return 1.5 * d(1.5 * rho) >= cfg.wolfe_c2 * s0; };
    std::vector<double> steps, uppers, lowers;
    double rho = 1.0, l = 0.0, u = 1.0, accepted = -1.0;
    steps.push_back(rho);
    if (w1(rho) && w2(rho)) accepted = rho;
    if (accepted < 0 && w1(rho)) accepted = rho;  // full step with W1 only
    for (int it = 0; it < 100 && accepted < 0; ++it) {
      rho = l + (u - l) * sim.uniform(0.25, 0.75);
      steps.push_back(rho);
      if (w1(rho) && w2(rho)) {
        accepted = rho;
        break;
      }
      if (!w1(rho)) {
        u = rho;
      } else {
        l = rho;
      }
      uppers.push_back(u);
      lowers.push_back(l);
    }
    ASSERT_GT(accepted, 0.0) << seed;
    ASSERT_EQ(trace.size(), steps.size()) << seed;
    for (std::size_t k = 0; k < steps.size(); ++k) EXPECT_EQ(trace[k].step, steps[k]);
    for (std::size_t k = 0; k < uppers.size(); ++k) {
      EXPECT_EQ(trace[k + 1].upper, uppers[k]);
      EXPECT_EQ(trace[k + 1].lower, lowers[k]);
      if (!trace[k + 1].w1) EXPECT_EQ(trace[k + 1].upper, trace[k + 1].step);
    }
    EXPECT_EQ(r.step, accepted);
  }
}

TEST(LineSearch, FallbackWhenNothingDecreases) {
  // Uphill direction: no trial satisfies W1.
  const OneDim f{[](double x) { return x; }, [](double) { return 1.0; }};
  const std::vector<double> tail{0.0}, head{1.0};
  FminConfig cfg;
  cfg.line_search_iters = 10;
  Rng rng(0);
  const auto r = wolfe_line_search(f, tail, head, cfg, rng);
  EXPECT_TRUE(r.fallback);
  EXPECT_FALSE(r.sufficient_decrease);
  EXPECT_EQ(r.step, 1e-8);
  EXPECT_EQ(r.evaluations, 11u);
}

TEST(Minimize, BoxQuadraticReachesInteriorMinimum) {
  const BoxQuadratic f{{1.0, 4.0, 0.5, 9.0}, {0.2, 0.7, 0.5, 0.9}};
  FminConfig cfg;
  cfg.grad_tol = 1e-10;
  const std::vector<double> start{0.9, 0.1, 0.2, 0.5};
  const auto r = minimize_from(f, start, cfg, 3);
  ASSERT_TRUE(r.converged);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(r.q_min[i], f.b[i], 1e-10);
}

TEST(Minimize, SeparableModelRecoversSigmoid) {
  const auto g = make_complete(6);
  IsingModel m(g, std::vector<double>(g.edge_count(), 0.0), {0.3, -0.7, 1.2, 0.0, -2.0, 0.5});
  const auto spec = FreeEnergySpec::bethe(m);
  for (std::uint64_t s = 0; s < 10; ++s) {
    FminConfig cfg;
    cfg.seed = s;
    cfg.grad_tol = 1e-9;
    const auto r = minimize(spec, cfg);
    ASSERT_TRUE(r.converged);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(r.q_min[i], sigmoid(2.0 * m.field[i]), 1e-8);
  }
}

TEST(Minimize, BetheOnTreesIsExact) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto m = sample_ising(make_random_tree(3 + s % 8, s), -1, 1, 0.6, 100 + s);
    const auto ex = exact_marginals(m);
    FminConfig cfg;
    cfg.seed = s;
    const auto r = minimize(FreeEnergySpec::bethe(m), cfg);
    ASSERT_TRUE(r.converged);
    for (std::size_t i = 0; i < m.node_count(); ++i) EXPECT_NEAR(r.q_min[i], ex.singleton[i], 1e-6);
    EXPECT_NEAR(-r.f_value, ex.log_z, 1e-6);
  }
}

TEST(Minimize, ReturnsLowestRestart) {
  const auto m = sample_ising(make_complete(10), 0, 2, 0.6, 77);
  const auto spec = FreeEnergySpec::bethe(m);
  FminConfig cfg;
  cfg.seed = 9;
  const auto runs = minimize_all(FreeEnergyObjective(spec), 10, cfg);
  const auto best = pick_best(runs);
  for (const auto& r : runs) EXPECT_LE(best.f_value, r.f_value);
  EXPECT_EQ(best.f_value, runs[best.restart_index].f_value);
  if (best.converged) EXPECT_LE(best.grad_norm, cfg.grad_tol);
  EXPECT_NEAR(best.f_value, evaluate_on_manifold(spec, best.q_min), 0.0);

  // A 20-restart reference run cannot beat it by more than roundoff unless
  // it finds a different basin, in which case it must be strictly lower.
  cfg.restarts = 20;
  const auto ref = minimize(spec, cfg);
  EXPECT_LE(ref.f_value, best.f_value + 1e-9);
}

TEST(Minimize, TieBreakLowestIndex) {
  std::vector<FminResult> runs(3);
  for (std::size_t r = 0; r < 3; ++r) {
    runs[r].f_value = r == 0 ? 2.0 : 1.0;
    runs[r].restart_index = r;
    runs[r].q_min = {static_cast<double>(r)};
  }
  EXPECT_EQ(pick_best(runs).restart_index, 1u);
  runs[1].f_value = std::nan("");
  const auto b = pick_best(runs);
  EXPECT_EQ(b.restart_index, 2u);
  EXPECT_EQ(b.failed_restarts, 1u);
}

TEST(Minimize, IteratesStayInsideAndDescend) {
  const auto m = sample_ising(make_grid(3, 3), -2, 2, 0.6, 5);
  const auto spec = FreeEnergySpec::with_counting(m, uniform_counting(m.graph, 1.7));
  const FreeEnergyObjective f(spec);
  std::vector<FminIteration> trace;
  const std::vector<double> start(9, 0.3);
  FminConfig cfg;
  const auto r = minimize_from(f, start, cfg, 1, &trace);
  ASSERT_FALSE(trace.empty());
  for (const auto& it : trace) {
    if (it.sufficient_decrease) {
      EXPECT_LE(it.f_after, it.f_before + cfg.wolfe_c1 * it.step * it.slope + 1e-12);
      EXPECT_LE(it.f_after, it.f_before + 1e-12);
    }
  }
  for (double v : r.q_min) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  EXPECT_TRUE(in_box(m.graph, manifold_point(spec, r.q_min)));
}

TEST(Minimize, Deterministic) {
  const auto m = sample_ising(make_complete(8), -2, 2, 0.6, 13);
  const auto spec = FreeEnergySpec::bethe(m);
  FminConfig cfg;
  cfg.seed = 42;
  cfg.random_initial_step = true;
  const auto a = minimize(spec, cfg);
  const auto b = minimize(spec, cfg);
  EXPECT_EQ(a.q_min, b.q_min);
  EXPECT_EQ(a.f_value, b.f_value);
  EXPECT_EQ(a.iterations, b.iterations);
  EXPECT_EQ(a.restart_index, b.restart_index);
}

TEST(Minimize, ConvexSpecsHaveOneMinimum) {
  for (std::uint64_t s = 0; s < 6; ++s) {
    const auto m = sample_ising(make_complete(10), s % 2 ? 0.0 : -2.5, 2.5, 0.6, 300 + s);
    for (const auto& c : {trw_counting(m.graph), ls_convex_counting(m.graph)}) {
      const auto spec = FreeEnergySpec::with_counting(m, c);
      FminConfig cfg;
      cfg.seed = s;
      const auto runs = minimize_all(FreeEnergyObjective(spec), 10, cfg);
      for (const auto& r : runs)
        for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(r.q_min[i], runs[0].q_min[i], 1e-5);
    }
  }
}

TEST(Minimize, TrwUpperBoundsLogPartition) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto m = sample_ising(make_complete(10), s % 2 ? 0.0 : -3.0, 3.0, 0.6, 400 + s);
    FminConfig cfg;
    cfg.seed = s;
    const auto r = minimize(FreeEnergySpec::with_counting(m, trw_counting(m.graph)), cfg);
    EXPECT_GE(-r.f_value, exact_log_partition(m) - 1e-7);
  }
}

TEST(Minimize, RejectsInfeasibleStart) {
  const BoxQuadratic f{{1.0}, {0.5}};
  const std::vector<double> start{1.0};
  EXPECT_THROW(minimize_from(f, start, FminConfig{}, 0), std::invalid_argument);
}
