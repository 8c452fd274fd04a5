#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "varinf/fmin.hpp"
#include "varinf/free_energy.hpp"
#include "varinf/inference_result.hpp"
#include "varinf/lbp_sbp.hpp"

namespace varinf {

struct AdaptCConfig {
  double delta_c = 0.1;
  double c_tol = 0.05;
  double c_max = 10.0;
  FminConfig fmin;

  void validate() const {
    if (!(delta_c > 0.0)) throw std::invalid_argument("delta_c must be positive");
    if (!(c_tol > 0.0)) throw std::invalid_argument("c_tol must be positive");
    if (!(c_max >= 1.0)) throw std::invalid_argument("c_max must be at least 1");
    fmin.validate();
  }
};

struct AdaptCResult {
  InferenceResult result;
  double c_final = 1.0;
  std::vector<double> c_visited;       // 1, 1 + dc, 1 + 2 dc, ...
  std::vector<double> log_z_estimates;  // one per visited c
  bool plateau_reached = false;         // stopped on the c_tol criterion
};

/// Increase a shared pairwise counting number c from 1 (Bethe) in steps of
/// delta_c, with variable-valid local numbers, until the estimate -min F_c
/// changes by less than c_tol between consecutive steps or c reaches c_max.
/// Each step warm-starts from the previous minimizer and falls back to fresh
/// restarts when the warm run does not converge.
inline AdaptCResult adapt_c(const IsingModel& model, const AdaptCConfig& cfg) {
  cfg.validate();
  AdaptCResult out;
  const auto& g = model.graph;

  auto solve = [&](const FreeEnergySpec& spec, const std::vector<double>* warm) {
    if (warm) {
      auto r = minimize_from(spec, *warm, cfg.fmin);
      if (r.converged) return r;
      auto fresh = minimize(spec, cfg.fmin);
      if (fresh.converged || !std::isfinite(r.f_value) || fresh.f_value < r.f_value) return fresh;
      return r;
    }
    return minimize(spec, cfg.fmin);
  };

  auto spec = FreeEnergySpec::with_counting(model, uniform_counting(g, 1.0));
  auto best = solve(spec, nullptr);
  if (!std::isfinite(best.f_value)) {
    out.result = result_from_fmin(spec, best);
    out.result.c_final = 1.0;
    out.result.flags.emplace_back("adapt_c_initial_fmin_failed");
    return out;
  }
  out.c_visited.push_back(1.0);
  out.log_z_estimates.push_back(-best.f_value);
  std::size_t total_iters = best.iterations;
  double c_last = 1.0;
  bool failed = false;

  for (std::size_t k = 1;; ++k) {
    const double c = 1.0 + static_cast<double>(k) * cfg.delta_c;
    if (c > cfg.c_max + 1e-12) break;
    auto next_spec = FreeEnergySpec::with_counting(model, uniform_counting(g, c));
    auto r = solve(next_spec, &best.q_min);
    total_iters += r.iterations;
    if (!std::isfinite(r.f_value) || !r.converged) {
      failed = true;
      break;
    }
    const double est = -r.f_value;
    const double change = std::abs(est - out.log_z_estimates.back());
    out.c_visited.push_back(c);
    out.log_z_estimates.push_back(est);
    spec = std::move(next_spec);
    best = std::move(r);
    c_last = c;
    if (change < cfg.c_tol) {
      out.plateau_reached = true;
      break;
    }
  }

  out.c_final = c_last;
  out.result = result_from_fmin(spec, best);
  out.result.c_final = c_last;
  out.result.iterations = total_iters;
  if (failed) out.result.flags.emplace_back("adapt_c_fmin_failed");
  if (!out.plateau_reached && !failed) out.result.flags.emplace_back("adapt_c_hit_c_max");
  return out;
}

struct AdaptZetaConfig {
  double delta_zeta = 0.02;
  FminConfig fmin = [] {
    FminConfig f;
    f.restarts = 1;
    return f;
  }();

  void validate() const {
    if (!(delta_zeta > 0.0 && delta_zeta < 1.0)) throw std::invalid_argument("delta_zeta must lie in (0, 1)");
    fmin.validate();
  }
};

struct AdaptZetaResult {
  InferenceResult result;
  double zeta_final = 1.0;
  double spectral_radius = 0.0;
  bool underflow = false;
};

/// Lower a shared pairwise scale factor from 1 in steps of delta_zeta until
/// the uniqueness certificate holds, then minimize F_zeta once.
inline AdaptZetaResult adapt_zeta(const IsingModel& model, const AdaptZetaConfig& cfg) {
  cfg.validate();
  AdaptZetaResult out;
  double zeta = 1.0;
  auto cert = mooij_radius(model, zeta);
  for (std::size_t k = 1; !cert.holds; ++k) {
    zeta = 1.0 - static_cast<double>(k) * cfg.delta_zeta;
    if (zeta <= 1e-12) {
      out.underflow = true;
      zeta = cfg.delta_zeta;
      cert = mooij_radius(model, zeta);
      break;
    }
    cert = mooij_radius(model, zeta);
  }
  out.zeta_final = zeta;
  out.spectral_radius = cert.spectral_radius;

  const auto spec = FreeEnergySpec::with_zeta(model, zeta);
  const auto r = minimize(spec, cfg.fmin);
  out.result = result_from_fmin(spec, r);
  out.result.zeta_final = zeta;
  out.result.log_z_model_modified = zeta < 1.0;
  if (out.underflow) out.result.flags.emplace_back("adapt_zeta_underflow");
  return out;
}

}  // namespace varinf
