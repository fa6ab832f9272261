// Copyright (c) 2026 The archtree authors
// SPDX-License-Identifier: Apache-2.0

#include "search/schedule.hpp"

#include "core/error.hpp"

namespace archtree {

double latency_schedule(double tau_root, double tau_goal, int steps, int step) {
    if (steps < 1) fail(ErrorCode::Argument, "latency_schedule: steps must be at least 1");
    if (step < 1 || step > steps)
        fail(ErrorCode::Argument, "latency_schedule: step must lie in [1, steps]");
    if (!(tau_goal < tau_root))
        fail(ErrorCode::Argument, "latency_schedule: the goal must be below the root latency");
    return (static_cast<double>(steps - step) * tau_root + static_cast<double>(step) * tau_goal) /
           static_cast<double>(steps);
}

std::string StepPolicy::to_string() const {
    switch (kind) {
        case Kind::AdaptiveSqrt: return "sqrt";
        case Kind::AdaptiveLog: return "log";
        case Kind::Fixed: return "fixed:" + std::to_string(fixed_delta);
    }
    return "?";
}

StepPolicy StepPolicy::parse(const std::string& text) {
    StepPolicy p;
    if (text == "sqrt") {
        p.kind = Kind::AdaptiveSqrt;
    } else if (text == "log") {
        p.kind = Kind::AdaptiveLog;
    } else if (text.rfind("fixed:", 0) == 0) {
        p.kind = Kind::Fixed;
        try {
            p.fixed_delta = std::stoll(text.substr(6));
        } catch (const std::exception&) {
            fail(ErrorCode::Argument, "cannot parse step policy '" + text + "'");
        }
        if (p.fixed_delta < 1) fail(ErrorCode::Argument, "fixed step must be at least 1");
    } else {
        fail(ErrorCode::Argument, "unknown step policy '" + text + "'");
    }
    return p;
}

std::int64_t exploration_step(std::int64_t channels, const StepPolicy& policy) {
    if (channels < 1) fail(ErrorCode::Argument, "exploration_step: channels must be at least 1");
    switch (policy.kind) {
        case StepPolicy::Kind::AdaptiveSqrt: {
            // 2^ceil(log2(sqrt(C))) == 2^t for the smallest t with 4^t >= C.
            std::int64_t stride = 1, reach = 1;
            while (reach < channels) {
                stride *= 2;
                reach *= 4;
            }
            return stride;
        }
        case StepPolicy::Kind::AdaptiveLog: {
            // ceil(log2(C)): the smallest t with 2^t >= C.
            std::int64_t t = 0, reach = 1;
            while (reach < channels) {
                ++t;
                reach *= 2;
            }
            return t < 1 ? 1 : t;
        }
        case StepPolicy::Kind::Fixed:
            return policy.fixed_delta;
    }
    fail(ErrorCode::Internal, "unreachable step policy");
}

}  // namespace archtree
