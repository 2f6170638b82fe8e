#pragma once

// Camera trajectory curation and evaluation toolkit.

#include "ctrw/calibration.hpp"
#include "ctrw/conditioning.hpp"
#include "ctrw/config.hpp"
#include "ctrw/error.hpp"
#include "ctrw/geometry.hpp"
#include "ctrw/io.hpp"
#include "ctrw/manifest.hpp"
#include "ctrw/metrics.hpp"
#include "ctrw/report.hpp"
#include "ctrw/trajectory_analysis.hpp"
