// Copyright (c) 2026 The archtree authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "graph/model.hpp"

namespace archtree {

/// Per-group channel counts; identifies a pruned architecture. Two models
/// with the same signature have the same latency class, so this is the cache
/// and uniqueness key. Value semantics throughout.
struct Signature {
    std::vector<std::int64_t> counts;

    bool operator==(const Signature&) const = default;
    auto operator<=>(const Signature&) const = default;

    std::string to_string() const;   // e.g. "4-8-6-3"
    std::size_t hash() const;
};

struct SignatureHash {
    std::size_t operator()(const Signature& s) const { return s.hash(); }
};

enum class PortSide { Input, Output };

const char* port_side_name(PortSide side);

/// One (layer, port) membership in a channel group. `multiplicity` is the
/// number of tensor columns per channel on that port: 1 everywhere except a
/// Dense input fed through a Flatten of a spatial value, where each channel
/// owns a contiguous block of height*width columns.
struct PortRef {
    std::string layer_id;
    PortSide side = PortSide::Output;
    std::int64_t multiplicity = 1;
};

/// Set of ports that must keep equal channel counts and are pruned together.
struct ChannelGroup {
    int index = 0;
    std::int64_t channel_count = 0;
    bool prunable = true;
    std::vector<PortRef> members;  // Input's output port plus Dense/Conv2d ports
};

class GroupSet {
public:
    std::vector<ChannelGroup> groups;

    std::size_t size() const { return groups.size(); }
    const ChannelGroup& operator[](std::size_t i) const { return groups[i]; }

    /// Group index for a port; -1 when the port is not tracked.
    int group_of(const std::string& layer_id, PortSide side) const;

    Signature signature() const;
};

/// Partition of the prunable-layer ports into channel groups, derived from
/// graph topology: shared inputs, sequential producer/consumer links, and Add
/// nodes each tie ports together. Group indices follow topological order of
/// first appearance. The groups holding the network Input and the final
/// pre-Output value are frozen (prunable = false).
///
/// Requires a graph that passes validate_graph.
GroupSet build_channel_groups(const ModelGraph& model);

/// Counts per group, in group-index order.
Signature signature_of(const ModelGraph& model, const GroupSet& groups);

}  // namespace archtree
