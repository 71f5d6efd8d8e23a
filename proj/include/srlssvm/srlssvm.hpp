#pragma once

#include "srlssvm/data.hpp"
#include "srlssvm/errors.hpp"
#include "srlssvm/experiment.hpp"
#include "srlssvm/kernels.hpp"
#include "srlssvm/losses.hpp"
#include "srlssvm/lowrank.hpp"
#include "srlssvm/model.hpp"
#include "srlssvm/parallel.hpp"
#include "srlssvm/solver.hpp"
