// Copyright (C) 2026 The hrvda-desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "hrvda/config.hpp"
#include "hrvda/content_filter.hpp"
#include "hrvda/encoder.hpp"
#include "hrvda/instruction_filter.hpp"
#include "hrvda/mlp.hpp"
#include "hrvda/patching.hpp"
#include "hrvda/pipeline.hpp"
#include "hrvda/pnm.hpp"
#include "hrvda/report.hpp"
#include "hrvda/rng.hpp"
#include "hrvda/synthdoc.hpp"
#include "hrvda/tensor.hpp"
#include "hrvda/training.hpp"
#include "hrvda/weights_io.hpp"
