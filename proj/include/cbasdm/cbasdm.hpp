#pragma once

#include "cbasdm/numeric.hpp"
#include "cbasdm/model.hpp"
#include "cbasdm/losses.hpp"
#include "cbasdm/majorizer.hpp"
#include "cbasdm/estimators.hpp"
#include "cbasdm/rng.hpp"
#include "cbasdm/simulation.hpp"
#include "cbasdm/evaluation.hpp"
#include "cbasdm/io.hpp"
