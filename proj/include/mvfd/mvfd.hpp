#pragma once

// Umbrella header.

#include "mvfd/analysis.hpp"
#include "mvfd/autodiff.hpp"
#include "mvfd/checkpoint.hpp"
#include "mvfd/common.hpp"
#include "mvfd/convert.hpp"
#include "mvfd/corruption.hpp"
#include "mvfd/data.hpp"
#include "mvfd/losses.hpp"
#include "mvfd/masking.hpp"
#include "mvfd/metrics.hpp"
#include "mvfd/mlp.hpp"
#include "mvfd/model.hpp"
#include "mvfd/run_manifest.hpp"
#include "mvfd/synthetic.hpp"
#include "mvfd/train.hpp"
