#pragma once

// Umbrella header for the boundary-conditioned face manipulation library.

#include "facemanip/adam.hpp"
#include "facemanip/autodiff.hpp"
#include "facemanip/checkpoint.hpp"
#include "facemanip/config.hpp"
#include "facemanip/datapipe.hpp"
#include "facemanip/error.hpp"
#include "facemanip/evalsuite.hpp"
#include "facemanip/geometry.hpp"
#include "facemanip/imageio.hpp"
#include "facemanip/layers.hpp"
#include "facemanip/losses.hpp"
#include "facemanip/models.hpp"
#include "facemanip/ops.hpp"
#include "facemanip/rng.hpp"
#include "facemanip/stage1.hpp"
#include "facemanip/stage2.hpp"
#include "facemanip/synthetic.hpp"
#include "facemanip/tensor.hpp"
#include "facemanip/train_common.hpp"
