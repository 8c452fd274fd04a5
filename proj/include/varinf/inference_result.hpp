#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "varinf/fmin.hpp"
#include "varinf/free_energy.hpp"

namespace varinf {

/// Output of any approximate-inference routine.
struct InferenceResult {
  std::vector<double> singleton;    // q_i = p(x_i = +1)
  std::vector<PairTable> pairwise;  // (++, +-, -+, --) per edge
  double log_z = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;
  std::size_t iterations = 0;
  double c_final = std::numeric_limits<double>::quiet_NaN();
  double zeta_final = std::numeric_limits<double>::quiet_NaN();
  /// The log-partition estimate refers to a rescaled model, not the input.
  bool log_z_model_modified = false;
  std::vector<std::string> flags;
};

/// Marginals at (q; xi*(q)) and the estimate -F at the returned point.
inline InferenceResult result_from_fmin(const FreeEnergySpec& spec, const FminResult& r) {
  InferenceResult out;
  out.singleton = r.q_min;
  out.pairwise = manifold_tables(spec, r.q_min);
  out.log_z = -r.f_value;
  out.converged = r.converged;
  out.iterations = r.iterations;
  if (!r.converged) out.flags.emplace_back("fmin_not_converged");
  return out;
}

}  // namespace varinf
