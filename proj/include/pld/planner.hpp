#pragma once

#include "pld/planner/cem.hpp"
#include "pld/planner/experiment.hpp"
