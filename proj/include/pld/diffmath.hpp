#pragma once

#include "pld/diffmath/adam.hpp"
#include "pld/diffmath/net.hpp"
#include "pld/diffmath/ops.hpp"
#include "pld/diffmath/special.hpp"
#include "pld/diffmath/tape.hpp"
