#pragma once

#include "clustering.hpp"
#include "diffusion.hpp"
#include "dueling.hpp"
#include "error.hpp"
#include "graph.hpp"
#include "harness.hpp"
#include "model.hpp"
#include "results.hpp"
#include "stats.hpp"
#include "strategy.hpp"
#include "synthetic.hpp"
