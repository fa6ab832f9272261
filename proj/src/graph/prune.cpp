// Copyright (c) 2026 The archtree authors
// SPDX-License-Identifier: Apache-2.0

#include "graph/prune.hpp"

#include "core/error.hpp"

namespace archtree {

ModelGraph apply_pruning(const ModelGraph& model, const GroupSet& groups, int group_index,
                         const std::set<std::int64_t>& channels) {
    if (group_index < 0 || group_index >= static_cast<int>(groups.size()))
        fail(ErrorCode::Argument, "apply_pruning: group index out of range");
    const ChannelGroup& group = groups[static_cast<std::size_t>(group_index)];
    if (!group.prunable)
        fail(ErrorCode::Argument,
             "apply_pruning: group " + std::to_string(group_index) + " is not prunable");
    if (static_cast<std::int64_t>(channels.size()) >= group.channel_count)
        fail(ErrorCode::Argument, "apply_pruning: at least one channel must survive");
    for (auto c : channels)
        if (c < 0 || c >= group.channel_count)
            fail(ErrorCode::Argument, "apply_pruning: channel index out of range");

    ModelGraph pruned = model;
    const auto removed = static_cast<std::int64_t>(channels.size());

    for (const auto& member : group.members) {
        Layer* layer = pruned.find_layer(member.layer_id);
        if (!layer || !layer->has_weights()) continue;

        Tensor* weight = pruned.weight_tensor(*layer, "weight");
        if (!weight) fail(ErrorCode::Internal, "apply_pruning: missing weight tensor");

        if (member.side == PortSide::Output) {
            *weight = remove_indices(*weight, 0, channels);
            if (Tensor* bias = pruned.weight_tensor(*layer, "bias"))
                *bias = remove_indices(*bias, 0, channels);
            if (layer->kind == LayerKind::Dense)
                layer->dense().out_features -= removed;
            else
                layer->conv().out_channels -= removed;
        } else {
            // Dense inputs may pack several columns per channel (Flatten of a
            // spatial value); expand each channel to its column block.
            std::set<std::int64_t> cols;
            if (member.multiplicity == 1) {
                cols = channels;
            } else {
                for (auto c : channels)
                    for (std::int64_t k = 0; k < member.multiplicity; ++k)
                        cols.insert(c * member.multiplicity + k);
            }
            *weight = remove_indices(*weight, 1, cols);
            if (layer->kind == LayerKind::Dense)
                layer->dense().in_features -= removed * member.multiplicity;
            else
                layer->conv().in_channels -= removed;
        }
    }

    auto violations = validate_graph(pruned);
    if (!violations.empty())
        fail(ErrorCode::Internal, "apply_pruning produced an invalid graph: " +
                                      violations.front().message + " (layer '" +
                                      violations.front().layer_id + "')");
    return pruned;
}

}  // namespace archtree
