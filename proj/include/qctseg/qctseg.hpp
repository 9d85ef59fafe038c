// Umbrella header.
#pragma once

#include "balloon.hpp"
#include "config.hpp"
#include "errors.hpp"
#include "geometry.hpp"
#include "landmarks.hpp"
#include "mesh.hpp"
#include "metrics.hpp"
#include "morphology.hpp"
#include "phantom.hpp"
#include "pipeline.hpp"
#include "precision.hpp"
#include "report.hpp"
#include "vcs.hpp"
#include "volume.hpp"
#include "volume_io.hpp"
#include "voxelize.hpp"
