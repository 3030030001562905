#pragma once

#include "herta/baseline.hpp"
#include "herta/error.hpp"
#include "herta/generate.hpp"
#include "herta/graph.hpp"
#include "herta/io.hpp"
#include "herta/loop.hpp"
#include "herta/model.hpp"
#include "herta/parallel.hpp"
#include "herta/rng.hpp"
#include "herta/sdd_solver.hpp"
#include "herta/sketch.hpp"
#include "herta/sparse.hpp"
#include "herta/sparsifier.hpp"
#include "herta/trainer.hpp"
#include "herta/types.hpp"
