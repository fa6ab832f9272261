// Copyright (c) 2026 The archtree authors
// SPDX-License-Identifier: Apache-2.0

#include "search/curve.hpp"

#include <cstdio>
#include <sstream>

#include "core/error.hpp"
#include "graph/prune.hpp"

namespace archtree {

namespace {

/// Model with group `g` cut down to `keep` channels (highest indices leave
/// first; the curve only depends on the signature for signature-keyed
/// providers).
ModelGraph pruned_to(const ModelGraph& root, const GroupSet& groups, int g, std::int64_t keep) {
    const std::int64_t full = groups[static_cast<std::size_t>(g)].channel_count;
    if (keep == full) return root;
    std::set<std::int64_t> drop;
    for (std::int64_t c = keep; c < full; ++c) drop.insert(c);
    return apply_pruning(root, groups, g, drop);
}

void append_row(std::string& csv, std::int64_t channels, double ms, const char* sweep) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%lld,%.10g,%s\n", static_cast<long long>(channels), ms,
                  sweep);
    csv += buf;
}

}  // namespace

std::string latency_curve_csv(const ModelGraph& model, int group_index,
                              LatencyProvider& provider, LatencyCache* cache,
                              const StepPolicy& adaptive_policy,
                              const BenchmarkProtocol& protocol) {
    const GroupSet groups = build_channel_groups(model);
    if (group_index < 0 || group_index >= static_cast<int>(groups.size()))
        fail(ErrorCode::Argument, "curve: group index out of range");
    if (!groups[static_cast<std::size_t>(group_index)].prunable)
        fail(ErrorCode::Argument,
             "curve: group " + std::to_string(group_index) + " is not prunable");

    auto measure = [&](const ModelGraph& m) {
        const Signature sig = build_channel_groups(m).signature();
        if (cache) return cache->get_or_measure(provider, m, sig, protocol);
        return provider.measure_ms(m, sig, protocol);
    };

    const std::int64_t full = groups[static_cast<std::size_t>(group_index)].channel_count;
    std::string csv = "channels_left,ms,sweep\n";

    for (std::int64_t c = full; c >= 1; --c)
        append_row(csv, c, measure(pruned_to(model, groups, group_index, c)), "fine");

    std::int64_t c = full;
    append_row(csv, c, measure(pruned_to(model, groups, group_index, c)), "adaptive");
    while (c > 1) {
        const std::int64_t stride = exploration_step(c, adaptive_policy);
        c = std::max<std::int64_t>(c - stride, 1);
        append_row(csv, c, measure(pruned_to(model, groups, group_index, c)), "adaptive");
    }
    return csv;
}

}  // namespace archtree
