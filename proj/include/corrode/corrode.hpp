#pragma once

#include "corrode/model.hpp"
#include "corrode/solver.hpp"
#include "corrode/des.hpp"
#include "corrode/config.hpp"
#include "corrode/harness.hpp"
