#pragma once

#include "spadchar/config.hpp"
#include "spadchar/error.hpp"
#include "spadchar/estimation.hpp"
#include "spadchar/experiments.hpp"
#include "spadchar/io.hpp"
#include "spadchar/model.hpp"
#include "spadchar/rng.hpp"
#include "spadchar/simulation.hpp"
