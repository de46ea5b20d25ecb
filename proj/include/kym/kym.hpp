#pragma once

#include "errors.hpp"
#include "polytope.hpp"
#include "toric.hpp"
#include "gauge.hpp"
#include "system.hpp"
#include "invariants.hpp"
#include "linearization.hpp"
#include "solver.hpp"
#include "geodesics.hpp"
#include "io.hpp"
#include "perturb.hpp"
