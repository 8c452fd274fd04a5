#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "varinf/adaptive.hpp"
#include "varinf/exact_oracle.hpp"

using namespace varinf;

namespace {

double log_z_error(const IsingModel& m, const InferenceResult& r) { return std::abs(r.log_z - exact_log_partition(m)); }

double singleton_error(const ExactAnswers& ex, const InferenceResult& r) {
  double s = 0.0;
  for (std::size_t i = 0; i < ex.singleton.size(); ++i) s += std::abs(ex.singleton[i] - r.singleton[i]);
  return s / static_cast<double>(ex.singleton.size());
}

}  // namespace

TEST(AdaptC, ConfigValidation) {
  AdaptCConfig c;
  EXPECT_NO_THROW(c.validate());
  c.delta_c = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.c_tol = -1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.c_max = 0.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(AdaptC, UncoupledModelStopsAtFirstCheck) {
  const auto g = make_complete(6);
  const IsingModel m(g, std::vector<double>(g.edge_count(), 0.0), {0.2, -0.3, 0.5, 0.0, 1.0, -0.8});
  // Independent oracle: log Z = sum log(2 cosh theta_i), attained at every c.
  double log_z = 0.0;
  for (double t : m.field) log_z += std::log(2.0 * std::cosh(t));
  const auto r = adapt_c(m, AdaptCConfig{});
  EXPECT_TRUE(r.plateau_reached);
  EXPECT_NEAR(r.c_final, 1.1, 1e-12);
  ASSERT_EQ(r.c_visited.size(), 2u);
  for (double est : r.log_z_estimates) EXPECT_NEAR(est, log_z, 1e-9);
}

TEST(AdaptC, ScheduleAndStoppingContract) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto m = sample_ising(make_complete(10), -2, 2, 0.6, 20 + s);
    AdaptCConfig cfg;
    cfg.fmin.seed = s;
    const auto r = adapt_c(m, cfg);
    ASSERT_GE(r.c_visited.size(), 2u);
    for (std::size_t k = 0; k < r.c_visited.size(); ++k)
      EXPECT_NEAR(r.c_visited[k], 1.0 + static_cast<double>(k) * cfg.delta_c, 1e-12);
    EXPECT_GE(r.c_final, 1.0 + cfg.delta_c - 1e-12);
    EXPECT_LE(r.c_final, cfg.c_max + 1e-12);
    EXPECT_EQ(r.c_final, r.c_visited.back());
    EXPECT_EQ(r.result.c_final, r.c_final);
    if (r.plateau_reached) {
      const auto n = r.log_z_estimates.size();
      EXPECT_LT(std::abs(r.log_z_estimates[n - 1] - r.log_z_estimates[n - 2]), cfg.c_tol);
    }
    EXPECT_EQ(r.result.log_z, r.log_z_estimates.back());
  }
}

TEST(AdaptC, InfiniteToleranceTakesOneStep) {
  const auto m = sample_ising(make_complete(8), -1, 1, 0.6, 4);
  AdaptCConfig cfg;
  cfg.c_tol = std::numeric_limits<double>::infinity();
  const auto r = adapt_c(m, cfg);
  EXPECT_NEAR(r.c_final, 1.1, 1e-12);
  const auto bethe = minimize(FreeEnergySpec::bethe(m), cfg.fmin);
  EXPECT_NEAR(r.log_z_estimates.front(), -bethe.f_value, 1e-6);
}

TEST(AdaptC, CapStopsTheSweep) {
  const auto m = sample_ising(make_complete(10), -2, 2, 0.6, 8);
  AdaptCConfig cfg;
  cfg.c_tol = 1e-12;
  cfg.c_max = 1.35;
  const auto r = adapt_c(m, cfg);
  EXPECT_FALSE(r.plateau_reached);
  EXPECT_NEAR(r.c_final, 1.3, 1e-12);
}

TEST(AdaptC, SelectedCountingNumberGrowsWithCouplingStrength) {
  auto mean_c = [](double jhat) {
    double sum = 0.0;
    for (std::uint64_t s = 0; s < 10; ++s) {
      AdaptCConfig cfg;
      cfg.fmin.seed = s;
      sum += adapt_c(sample_ising(make_complete(10), -jhat, jhat, 0.6, 30 + s), cfg).c_final;
    }
    return sum / 10.0;
  };
  const double weak = mean_c(0.5);
  const double strong = mean_c(2.0);
  EXPECT_LT(weak, 2.0);
  EXPECT_LT(weak, strong);
}

TEST(AdaptC, BeatsBetheOnStrongMixedModels) {
  double adapt = 0.0, bethe = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto m = sample_ising(make_complete(10), -2, 2, 0.6, 40 + s);
    AdaptCConfig cfg;
    cfg.fmin.seed = s;
    adapt += log_z_error(m, adapt_c(m, cfg).result);
    bethe += log_z_error(m, result_from_fmin(FreeEnergySpec::bethe(m), minimize(FreeEnergySpec::bethe(m), cfg.fmin)));
  }
  EXPECT_LT(adapt, bethe);
}

TEST(AdaptC, Deterministic) {
  const auto m = sample_ising(make_complete(9), -2, 2, 0.6, 6);
  AdaptCConfig cfg;
  cfg.fmin.seed = 3;
  const auto a = adapt_c(m, cfg);
  const auto b = adapt_c(m, cfg);
  EXPECT_EQ(a.log_z_estimates, b.log_z_estimates);
  EXPECT_EQ(a.result.singleton, b.result.singleton);
}

TEST(AdaptZeta, WeakModelKeepsBethe) {
  const auto m = sample_ising(make_complete(10), 0, 0.1, 0.6, 1);
  AdaptZetaConfig cfg;
  const auto r = adapt_zeta(m, cfg);
  EXPECT_EQ(r.zeta_final, 1.0);
  EXPECT_FALSE(r.result.log_z_model_modified);
  const auto bethe = minimize(FreeEnergySpec::bethe(m), cfg.fmin);
  EXPECT_EQ(r.result.singleton, bethe.q_min);
}

TEST(AdaptZeta, SingleEdgeIsExact) {
  const IsingModel m(Graph(2, {{0, 1}}), {2.5}, {0.4, -0.2});
  const auto r = adapt_zeta(m, AdaptZetaConfig{});
  EXPECT_EQ(r.zeta_final, 1.0);
  EXPECT_EQ(r.spectral_radius, 0.0);
  const auto ex = exact_marginals(m);
  EXPECT_NEAR(r.result.singleton[0], ex.singleton[0], 1e-6);
  EXPECT_NEAR(r.result.singleton[1], ex.singleton[1], 1e-6);
  EXPECT_NEAR(r.result.log_z, ex.log_z, 1e-6);
}

TEST(AdaptZeta, StrongAttractiveModelsShrinkZetaAndImproveMarginals) {
  double adapt = 0.0, bethe = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto m = sample_ising(make_complete(10), 0, 2, 0.2, 50 + s);
    const auto ex = exact_marginals(m);
    AdaptZetaConfig cfg;
    cfg.fmin.seed = s;
    const auto r = adapt_zeta(m, cfg);
    EXPECT_LT(r.zeta_final, 1.0);
    EXPECT_TRUE(mooij_radius(m, r.zeta_final).holds);
    EXPECT_TRUE(r.result.log_z_model_modified);
    EXPECT_FALSE(r.underflow);
    // Steps are whole multiples of delta_zeta below 1.
    const double steps = (1.0 - r.zeta_final) / cfg.delta_zeta;
    EXPECT_NEAR(steps, std::round(steps), 1e-9);
    EXPECT_FALSE(mooij_radius(m, r.zeta_final + cfg.delta_zeta).holds);
    adapt += singleton_error(ex, r.result);
    bethe += singleton_error(ex, result_from_fmin(FreeEnergySpec::bethe(m), minimize(FreeEnergySpec::bethe(m), cfg.fmin)));
  }
  EXPECT_LT(adapt, bethe);
}

TEST(AdaptZeta, ConfigValidation) {
  AdaptZetaConfig c;
  EXPECT_EQ(c.fmin.restarts, 1u);
  c.delta_zeta = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.delta_zeta = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}
