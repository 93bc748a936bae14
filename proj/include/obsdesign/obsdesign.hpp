#pragma once

#include "obsdesign/error.hpp"
#include "obsdesign/dataset.hpp"
#include "obsdesign/propensity.hpp"
#include "obsdesign/distance.hpp"
#include "obsdesign/network.hpp"
#include "obsdesign/matchers.hpp"
#include "obsdesign/weighting.hpp"
#include "obsdesign/diagnostics.hpp"
#include "obsdesign/plots.hpp"
#include "obsdesign/estimation.hpp"
#include "obsdesign/respecify.hpp"
#include "obsdesign/design.hpp"
#include "obsdesign/simbench.hpp"
#include "obsdesign/pipeline.hpp"
