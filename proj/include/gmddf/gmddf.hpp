#pragma once

// Umbrella header for the whole library.

#include "gmddf/benchmark.hpp"
#include "gmddf/config.hpp"
#include "gmddf/core.hpp"
#include "gmddf/ddf.hpp"
#include "gmddf/gaussian.hpp"
#include "gmddf/gm_json.hpp"
#include "gmddf/golden_section.hpp"
#include "gmddf/grid.hpp"
#include "gmddf/laplace.hpp"
#include "gmddf/mixture_learning.hpp"
#include "gmddf/quotient.hpp"
#include "gmddf/random_problem.hpp"
#include "gmddf/sampling.hpp"
#include "gmddf/tracking.hpp"
#include "gmddf/wep.hpp"
