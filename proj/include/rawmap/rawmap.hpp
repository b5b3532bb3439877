// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the rawmap Project.

#pragma once

#include "rawmap/benchmark.hpp"
#include "rawmap/color.hpp"
#include "rawmap/errors.hpp"
#include "rawmap/eval.hpp"
#include "rawmap/io.hpp"
#include "rawmap/knn.hpp"
#include "rawmap/pipeline.hpp"
#include "rawmap/preprocess.hpp"
#include "rawmap/spectral.hpp"
#include "rawmap/tinynet.hpp"
#include "rawmap/train.hpp"
