// Copyright (c) 2026 The archtree authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

namespace archtree {

/// Uniform latency scheduling: the step-i goal interpolates linearly between
/// the root latency and the final goal, hitting the goal exactly at i == s.
double latency_schedule(double tau_root, double tau_goal, int steps, int step);

/// How many channels one latency probe removes.
struct StepPolicy {
    enum class Kind {
        AdaptiveSqrt,  // 2^ceil(log2(sqrt(C))): a power of two near sqrt(C)
        AdaptiveLog,   // max(1, ceil(log2(C))): finer exploration
        Fixed,
    };
    Kind kind = Kind::AdaptiveSqrt;
    std::int64_t fixed_delta = 1;

    std::string to_string() const;
    static StepPolicy parse(const std::string& text);  // "sqrt" | "log" | "fixed:<k>"
};

/// Stride for a group currently holding `channels` channels; always >= 1 and
/// computed integer-exactly (no floating point rounding at the boundaries).
std::int64_t exploration_step(std::int64_t channels, const StepPolicy& policy);

}  // namespace archtree
