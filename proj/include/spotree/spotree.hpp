#pragma once

// Everything in one include.

#include "spotree/core.hpp"
#include "spotree/datagen.hpp"
#include "spotree/dataset_io.hpp"
#include "spotree/exact.hpp"
#include "spotree/experiment.hpp"
#include "spotree/forest.hpp"
#include "spotree/greedy.hpp"
#include "spotree/loss.hpp"
#include "spotree/lp.hpp"
#include "spotree/milp.hpp"
#include "spotree/oracle.hpp"
#include "spotree/rng.hpp"
#include "spotree/tree.hpp"
