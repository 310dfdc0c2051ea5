#pragma once

#include "capture.hpp"
#include "dense_depth.hpp"
#include "geometry.hpp"
#include "image_io.hpp"
#include "manifest.hpp"
#include "metrics.hpp"
#include "morphology.hpp"
#include "parallel.hpp"
#include "protocol.hpp"
#include "raster.hpp"
#include "refinement.hpp"
#include "service.hpp"
#include "synthesis.hpp"
#include "synthetic_scene.hpp"
#include "views.hpp"
