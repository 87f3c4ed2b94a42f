#pragma once

#include "cdro/bias.hpp"
#include "cdro/commands.hpp"
#include "cdro/config.hpp"
#include "cdro/data.hpp"
#include "cdro/divergence.hpp"
#include "cdro/dual_objective.hpp"
#include "cdro/errors.hpp"
#include "cdro/losses.hpp"
#include "cdro/oracle.hpp"
#include "cdro/report.hpp"
#include "cdro/rng.hpp"
#include "cdro/solvers.hpp"
