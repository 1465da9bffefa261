#pragma once

#include "pld/model/losses.hpp"
#include "pld/model/parsimony.hpp"
#include "pld/model/transform.hpp"
