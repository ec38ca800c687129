#pragma once

// lir: a late-interaction (multi-vector) retrieval engine. Single umbrella
// header; every module is also usable on its own.

#include "lir/bench.hpp"
#include "lir/core.hpp"
#include "lir/eval.hpp"
#include "lir/fixtures.hpp"
#include "lir/index.hpp"
#include "lir/losses.hpp"
#include "lir/mining.hpp"
#include "lir/projection.hpp"
#include "lir/scoring.hpp"
