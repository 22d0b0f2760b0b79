#pragma once

#include "gapnet/attention.hpp"
#include "gapnet/checkpoint.hpp"
#include "gapnet/config.hpp"
#include "gapnet/dataset.hpp"
#include "gapnet/errors.hpp"
#include "gapnet/gradcheck.hpp"
#include "gapnet/graph.hpp"
#include "gapnet/layers.hpp"
#include "gapnet/metrics.hpp"
#include "gapnet/model.hpp"
#include "gapnet/ops.hpp"
#include "gapnet/rng.hpp"
#include "gapnet/tape.hpp"
#include "gapnet/tensor.hpp"
#include "gapnet/train.hpp"
