#pragma once

#include "jumpdrift/errors.hpp"
#include "jumpdrift/rng.hpp"
#include "jumpdrift/parallel.hpp"
#include "jumpdrift/polynomial.hpp"
#include "jumpdrift/kernels.hpp"
#include "jumpdrift/model.hpp"
#include "jumpdrift/presets.hpp"
#include "jumpdrift/simulator.hpp"
#include "jumpdrift/path_io.hpp"
#include "jumpdrift/grid.hpp"
#include "jumpdrift/kernel_sum.hpp"
#include "jumpdrift/rates.hpp"
#include "jumpdrift/estimators.hpp"
#include "jumpdrift/adaptive.hpp"
#include "jumpdrift/harness.hpp"
