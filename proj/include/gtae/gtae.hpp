// Copyright (c) 2026, The GTAE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "gtae/affinity.hpp"
#include "gtae/cluster.hpp"
#include "gtae/error.hpp"
#include "gtae/flops.hpp"
#include "gtae/grad_cache.hpp"
#include "gtae/linalg.hpp"
#include "gtae/linearize.hpp"
#include "gtae/models.hpp"
#include "gtae/oracle.hpp"
#include "gtae/parallel.hpp"
#include "gtae/pipeline.hpp"
#include "gtae/regression.hpp"
#include "gtae/rng.hpp"
#include "gtae/sketch.hpp"
#include "gtae/synth.hpp"
#include "gtae/task_io.hpp"
