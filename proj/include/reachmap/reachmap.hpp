#pragma once

#include "reachmap/error.hpp"
#include "reachmap/geometry.hpp"
#include "reachmap/kinematics.hpp"
#include "reachmap/grid.hpp"
#include "reachmap/map_io.hpp"
#include "reachmap/builder.hpp"
#include "reachmap/compression.hpp"
#include "reachmap/similarity.hpp"
#include "reachmap/energy.hpp"
#include "reachmap/ik.hpp"
#include "reachmap/eval.hpp"
