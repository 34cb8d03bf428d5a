#pragma once

#include "redist/bursts.hpp"
#include "redist/diagnostics.hpp"
#include "redist/discrepancy.hpp"
#include "redist/error.hpp"
#include "redist/graph.hpp"
#include "redist/io.hpp"
#include "redist/metrics.hpp"
#include "redist/noise_model.hpp"
#include "redist/parallel.hpp"
#include "redist/recom.hpp"
#include "redist/record.hpp"
#include "redist/rng.hpp"
