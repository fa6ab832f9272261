// Copyright (c) 2026 The archtree authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "cache/cache.hpp"
#include "graph/model.hpp"
#include "latency/provider.hpp"
#include "search/schedule.hpp"

namespace archtree {

/// Latency of one channel group swept from its full width down to a single
/// channel, twice: a fine sweep removing one channel per probe and an
/// adaptive sweep striding like the search does. CSV columns:
/// channels_left,ms,sweep. The root width appears in both sweeps.
std::string latency_curve_csv(const ModelGraph& model, int group_index,
                              LatencyProvider& provider, LatencyCache* cache,
                              const StepPolicy& adaptive_policy,
                              const BenchmarkProtocol& protocol);

}  // namespace archtree
