// Copyright 2026 The graft Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "graft/checkpoint.hpp"
#include "graft/config.hpp"
#include "graft/dtype.hpp"
#include "graft/error.hpp"
#include "graft/evaluator.hpp"
#include "graft/lae.hpp"
#include "graft/module_graph.hpp"
#include "graft/parallel.hpp"
#include "graft/runtime.hpp"
#include "graft/surgeon.hpp"
#include "graft/sweep.hpp"
#include "graft/tokenizer.hpp"
