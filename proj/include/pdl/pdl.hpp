#pragma once

// Umbrella header: population-data learning of sparse stochastic dynamics.

#include "pdl/basis.hpp"
#include "pdl/cli.hpp"
#include "pdl/common.hpp"
#include "pdl/config.hpp"
#include "pdl/dataset.hpp"
#include "pdl/dictionary.hpp"
#include "pdl/metrics.hpp"
#include "pdl/resim.hpp"
#include "pdl/simulate.hpp"
#include "pdl/sparse.hpp"
#include "pdl/threading.hpp"
#include "pdl/weakform.hpp"
