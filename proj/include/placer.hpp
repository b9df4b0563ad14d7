#pragma once

#include "placer/eigrp.hpp"
#include "placer/eval.hpp"
#include "placer/geometry.hpp"
#include "placer/mpn.hpp"
#include "placer/params.hpp"
#include "placer/ppo.hpp"
#include "placer/rng.hpp"
#include "placer/routing.hpp"
#include "placer/sim.hpp"
#include "placer/state_graph.hpp"
#include "placer/svg.hpp"
#include "placer/tape.hpp"
#include "placer/tensor.hpp"
#include "placer/topology.hpp"
#include "placer/traffic.hpp"
