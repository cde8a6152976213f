/// Umbrella header.
#pragma once

#include "bspline.hpp"
#include "dct.hpp"
#include "error.hpp"
#include "evaluate.hpp"
#include "filters.hpp"
#include "gradient.hpp"
#include "image.hpp"
#include "io.hpp"
#include "optimize.hpp"
#include "parallel.hpp"
#include "pipeline.hpp"
#include "similarity.hpp"
#include "synth.hpp"
#include "transform.hpp"
#include "warp.hpp"
