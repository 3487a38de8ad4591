#pragma once

#include "calming/errors.hpp"
#include "calming/linalg.hpp"
#include "calming/rng.hpp"
#include "calming/parallel.hpp"
#include "calming/forward_model.hpp"
#include "calming/calming_core.hpp"
#include "calming/toolkit.hpp"
#include "calming/smoothness.hpp"
#include "calming/pmle.hpp"
#include "calming/stats.hpp"
#include "calming/posterior.hpp"
#include "calming/bvm.hpp"
#include "calming/linear_minimax.hpp"
#include "calming/experiment.hpp"
#include "calming/pipelines.hpp"
#include "calming/version.hpp"
