#pragma once

#include "bvtrack/coefficients.hpp"
#include "bvtrack/core.hpp"
#include "bvtrack/errors.hpp"
#include "bvtrack/experiments.hpp"
#include "bvtrack/forward.hpp"
#include "bvtrack/insertion.hpp"
#include "bvtrack/objective.hpp"
#include "bvtrack/rng.hpp"
#include "bvtrack/serialization.hpp"
#include "bvtrack/solver.hpp"
#include "bvtrack/svg.hpp"
#include "bvtrack/validation.hpp"
