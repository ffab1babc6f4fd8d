#pragma once

// Umbrella include for the whole library.

#include "vio/checkpoint.hpp"
#include "vio/dataset.hpp"
#include "vio/degrade.hpp"
#include "vio/encoders.hpp"
#include "vio/errors.hpp"
#include "vio/eval.hpp"
#include "vio/fusion.hpp"
#include "vio/geometry.hpp"
#include "vio/image_io.hpp"
#include "vio/laplace.hpp"
#include "vio/model.hpp"
#include "vio/nn.hpp"
#include "vio/optim.hpp"
#include "vio/rng.hpp"
#include "vio/tensor.hpp"
