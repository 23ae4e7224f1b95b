#pragma once

#include "carted/errors.hpp"
#include "carted/linalg.hpp"
#include "carted/tensor.hpp"
#include "carted/parallel.hpp"
#include "carted/graph_utils.hpp"
#include "carted/parafac2_block.hpp"
#include "carted/causal_block.hpp"
#include "carted/solver.hpp"
#include "carted/synthetic.hpp"
#include "carted/metrics.hpp"
#include "carted/cpn.hpp"
#include "carted/io.hpp"
