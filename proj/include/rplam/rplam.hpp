#pragma once

#include "rplam/error.hpp"
#include "rplam/holdout.hpp"
#include "rplam/io.hpp"
#include "rplam/loss.hpp"
#include "rplam/parallel.hpp"
#include "rplam/penalties.hpp"
#include "rplam/pipeline.hpp"
#include "rplam/preliminary.hpp"
#include "rplam/random.hpp"
#include "rplam/selection.hpp"
#include "rplam/simulate.hpp"
#include "rplam/solver.hpp"
#include "rplam/splines.hpp"
