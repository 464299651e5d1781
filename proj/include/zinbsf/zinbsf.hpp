#pragma once

// Umbrella header for the model, sampler and diagnostics. The CLI driver
// (zinbsf/io/cli.hpp) is not included; it pulls in CLI11 and nlohmann/json.

#include "zinbsf/errors.hpp"
#include "zinbsf/rng.hpp"
#include "zinbsf/core/distributions.hpp"
#include "zinbsf/core/model.hpp"
#include "zinbsf/spatial/graph.hpp"
#include "zinbsf/spatial/moran_basis.hpp"
#include "zinbsf/inference/sampler.hpp"
#include "zinbsf/inference/draws.hpp"
#include "zinbsf/diagnostics/mcmc_stats.hpp"
#include "zinbsf/diagnostics/hpd.hpp"
#include "zinbsf/diagnostics/waic.hpp"
#include "zinbsf/diagnostics/rqr.hpp"
#include "zinbsf/diagnostics/summary.hpp"
#include "zinbsf/simulate/simulate.hpp"
#include "zinbsf/io/csv.hpp"
#include "zinbsf/io/dataset_io.hpp"
#include "zinbsf/io/binary.hpp"
#include "zinbsf/io/results.hpp"
