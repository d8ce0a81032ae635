#pragma once

#include "nndm/abstraction.hpp"
#include "nndm/automata.hpp"
#include "nndm/common.hpp"
#include "nndm/fixtures.hpp"
#include "nndm/geometry.hpp"
#include "nndm/hyper_rect.hpp"
#include "nndm/imdp.hpp"
#include "nndm/kernel.hpp"
#include "nndm/linear_relaxation.hpp"
#include "nndm/nn_model.hpp"
#include "nndm/pipeline.hpp"
#include "nndm/refinement.hpp"
#include "nndm/synthesis.hpp"
#include "nndm/transform.hpp"
#include "nndm/transition_bounds.hpp"
