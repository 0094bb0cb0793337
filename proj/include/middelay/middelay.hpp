#pragma once

#include "middelay/branch_analysis.hpp"
#include "middelay/dde_sim.hpp"
#include "middelay/error.hpp"
#include "middelay/gain_opt.hpp"
#include "middelay/io.hpp"
#include "middelay/mid_design.hpp"
#include "middelay/quasipoly.hpp"
#include "middelay/rootfinding.hpp"
