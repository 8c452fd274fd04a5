#pragma once

#include "varinf/adaptive.hpp"
#include "varinf/counting_schemes.hpp"
#include "varinf/errors.hpp"
#include "varinf/exact_oracle.hpp"
#include "varinf/fmin.hpp"
#include "varinf/free_energy.hpp"
#include "varinf/graph_model.hpp"
#include "varinf/harness.hpp"
#include "varinf/inference_result.hpp"
#include "varinf/lbp_sbp.hpp"
#include "varinf/metrics.hpp"
#include "varinf/rng.hpp"
