#pragma once

// Everything at once. Individual headers can be included on their own.

#include "ahop/bench.hpp"
#include "ahop/capacity.hpp"
#include "ahop/error.hpp"
#include "ahop/feature_map.hpp"
#include "ahop/hopfield.hpp"
#include "ahop/linalg.hpp"
#include "ahop/pattern.hpp"
#include "ahop/poly_approx.hpp"
#include "ahop/reduction.hpp"
#include "ahop/verify.hpp"
