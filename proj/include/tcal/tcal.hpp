#pragma once

// Umbrella header.
#include "tcal/baselines.hpp"
#include "tcal/calibrate.hpp"
#include "tcal/core/basis.hpp"
#include "tcal/core/csv.hpp"
#include "tcal/core/data.hpp"
#include "tcal/core/error.hpp"
#include "tcal/core/folds.hpp"
#include "tcal/core/normal.hpp"
#include "tcal/core/rng.hpp"
#include "tcal/dgp.hpp"
#include "tcal/dgp_spec.hpp"
#include "tcal/harness.hpp"
#include "tcal/linalg.hpp"
#include "tcal/nuisance/cate.hpp"
#include "tcal/nuisance/contrast.hpp"
#include "tcal/nuisance/odds.hpp"
#include "tcal/nuisance/smoother.hpp"
#include "tcal/oracle.hpp"
#include "tcal/quadrature.hpp"
#include "tcal/report.hpp"
