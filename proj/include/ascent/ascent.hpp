#pragma once

#include "ascent/common.hpp"
#include "ascent/tensor.hpp"
#include "ascent/ops.hpp"
#include "ascent/geometry.hpp"
#include "ascent/kinematics.hpp"
#include "ascent/dataset.hpp"
#include "ascent/synthetic.hpp"
#include "ascent/model.hpp"
#include "ascent/training.hpp"
#include "ascent/inference.hpp"
#include "ascent/evaluation.hpp"
#include "ascent/run_config.hpp"
