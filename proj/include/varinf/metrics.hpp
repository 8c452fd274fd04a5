#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

#include "varinf/exact_oracle.hpp"
#include "varinf/inference_result.hpp"

namespace varinf {

/// Per-node or per-edge averaged errors (default), or plain sums.
enum class ErrorScale { averaged, absolute };

/// (1/N) sum_i |p_i(+1) - q_i|.
inline double err_singleton(const ExactAnswers& exact, const InferenceResult& approx,
                            ErrorScale scale = ErrorScale::averaged) {
  if (exact.singleton.size() != approx.singleton.size())
    throw std::invalid_argument("singleton marginals have different node counts");
  double s = 0.0;
  for (std::size_t i = 0; i < exact.singleton.size(); ++i) s += std::abs(exact.singleton[i] - approx.singleton[i]);
  if (scale == ErrorScale::absolute || exact.singleton.empty()) return s;
  return s / static_cast<double>(exact.singleton.size());
}

/// (1/|E|) sum_ij (1/4) sum_ab |p_ij(a, b) - p^_ij(a, b)|.
inline double err_pairwise(const ExactAnswers& exact, const InferenceResult& approx,
                           ErrorScale scale = ErrorScale::averaged) {
  if (exact.pairwise.size() != approx.pairwise.size())
    throw std::invalid_argument("pairwise marginals have different edge counts");
  double s = 0.0;
  for (std::size_t k = 0; k < exact.pairwise.size(); ++k)
    for (int a = 0; a < 4; ++a) s += std::abs(exact.pairwise[k][a] - approx.pairwise[k][a]);
  if (scale == ErrorScale::absolute) return s;
  if (exact.pairwise.empty()) return 0.0;
  return s / (4.0 * static_cast<double>(exact.pairwise.size()));
}

/// |log Z - estimate|; NaN marks a missing (non-finite) estimate.
inline double err_log_z(double exact_log_z, double estimate) {
  if (!std::isfinite(exact_log_z) || !std::isfinite(estimate)) return std::numeric_limits<double>::quiet_NaN();
  return std::abs(exact_log_z - estimate);
}

}  // namespace varinf
