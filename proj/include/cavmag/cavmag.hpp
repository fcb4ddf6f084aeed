#pragma once

#include "calibration.hpp"
#include "errors.hpp"
#include "extrema.hpp"
#include "fitting.hpp"
#include "group_delay.hpp"
#include "io.hpp"
#include "levenberg_marquardt.hpp"
#include "model.hpp"
#include "parallel.hpp"
#include "sweeps.hpp"
#include "types.hpp"
