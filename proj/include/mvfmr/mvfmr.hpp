#pragma once

// Umbrella header for the MV-FMR library: functional principal component
// analysis of sparse longitudinal exposures, pseudo-exposure instrumental
// variable estimators, the cross-validated fitting pipeline, the simulation
// harness, and the CSV/JSON front end.

#include "mvfmr/errors.hpp"
#include "mvfmr/mathutil.hpp"
#include "mvfmr/metrics.hpp"
#include "mvfmr/smoothing.hpp"
#include "mvfmr/fpca.hpp"
#include "mvfmr/estimators.hpp"
#include "mvfmr/simulate.hpp"
#include "mvfmr/model.hpp"
#include "mvfmr/io.hpp"
#include "mvfmr/runner.hpp"
#include "mvfmr/version.hpp"
