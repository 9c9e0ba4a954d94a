#pragma once

#include "curve_core.hpp"
#include "geometry.hpp"
#include "metrics.hpp"
#include "reconfig_protocol.hpp"
#include "scenario.hpp"
#include "sim_engine.hpp"
#include "trace.hpp"
#include "trajectories.hpp"
