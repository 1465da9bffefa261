#pragma once

#include "pld/harness/checkpoint.hpp"
#include "pld/harness/config.hpp"
#include "pld/harness/results.hpp"
#include "pld/harness/run.hpp"
