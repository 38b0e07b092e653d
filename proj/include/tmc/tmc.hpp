#pragma once

#include "tmc/data.hpp"
#include "tmc/error.hpp"
#include "tmc/eval.hpp"
#include "tmc/fusion.hpp"
#include "tmc/loss.hpp"
#include "tmc/model.hpp"
#include "tmc/opinion.hpp"
#include "tmc/rng.hpp"
#include "tmc/special.hpp"
