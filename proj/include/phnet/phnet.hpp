#pragma once

#include "phnet/error.hpp"
#include "phnet/numerics.hpp"
#include "phnet/rng.hpp"
#include "phnet/topology.hpp"
#include "phnet/plant.hpp"
#include "phnet/controller.hpp"
#include "phnet/simulate.hpp"
#include "phnet/verify.hpp"
#include "phnet/train.hpp"
#include "phnet/config.hpp"
#include "phnet/io.hpp"
