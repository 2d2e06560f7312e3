#pragma once

#include "signet/checkpoint.hpp"
#include "signet/data.hpp"
#include "signet/evaluation.hpp"
#include "signet/image.hpp"
#include "signet/keyvalue.hpp"
#include "signet/layers.hpp"
#include "signet/model.hpp"
#include "signet/synthgen.hpp"
#include "signet/tensor.hpp"
#include "signet/training.hpp"
