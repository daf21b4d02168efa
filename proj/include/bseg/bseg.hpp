#pragma once

#include "bseg/boxfuse.hpp"
#include "bseg/calib.hpp"
#include "bseg/case_bundle.hpp"
#include "bseg/components.hpp"
#include "bseg/distance.hpp"
#include "bseg/error.hpp"
#include "bseg/heuristics.hpp"
#include "bseg/metrics.hpp"
#include "bseg/mip.hpp"
#include "bseg/pipeline.hpp"
#include "bseg/registration.hpp"
#include "bseg/resample.hpp"
#include "bseg/synth/augment.hpp"
#include "bseg/synth/crop.hpp"
#include "bseg/synth/degrade.hpp"
#include "bseg/synth/phantom.hpp"
#include "bseg/volume.hpp"
#include "bseg/volume_io.hpp"
