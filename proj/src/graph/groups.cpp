// Copyright (c) 2026 The archtree authors
// SPDX-License-Identifier: Apache-2.0

#include "graph/groups.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>

#include "core/error.hpp"

namespace archtree {

std::string Signature::to_string() const {
    std::ostringstream out;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (i) out << "-";
        out << counts[i];
    }
    return out.str();
}

std::size_t Signature::hash() const {
    std::size_t h = 1469598103934665603ULL;  // FNV-1a
    for (auto c : counts) {
        h ^= static_cast<std::size_t>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

const char* port_side_name(PortSide side) {
    return side == PortSide::Input ? "input" : "output";
}

int GroupSet::group_of(const std::string& layer_id, PortSide side) const {
    for (const auto& g : groups)
        for (const auto& m : g.members)
            if (m.layer_id == layer_id && m.side == side) return g.index;
    return -1;
}

Signature GroupSet::signature() const {
    Signature s;
    s.counts.reserve(groups.size());
    for (const auto& g : groups) s.counts.push_back(g.channel_count);
    return s;
}

namespace {

struct UnionFind {
    std::vector<int> parent;

    int make() {
        parent.push_back(static_cast<int>(parent.size()));
        return parent.back();
    }
    int find(int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace

GroupSet build_channel_groups(const ModelGraph& model) {
    {
        auto violations = validate_graph(model);
        if (!violations.empty())
            fail(ErrorCode::Validation,
                 "build_channel_groups on an invalid graph: " + violations.front().message);
    }
    const auto order = topological_order(model);
    const auto shapes = propagate_shapes(model);

    // One union-find node per layer output port, plus one per Dense/Conv2d
    // input port. Everything else (ReLU, pools, Flatten, Add, Output) passes
    // its producer group straight through.
    UnionFind uf;
    std::map<std::string, int> out_node;
    std::map<std::string, int> in_node;  // Dense/Conv2d only
    for (const auto& id : order) {
        const Layer& l = *model.find_layer(id);
        out_node[id] = uf.make();
        if (l.has_weights()) in_node[id] = uf.make();
    }

    for (const auto& id : order) {
        const Layer& l = *model.find_layer(id);
        switch (l.kind) {
            case LayerKind::Input:
                break;  // starts its own group
            case LayerKind::Dense:
            case LayerKind::Conv2d:
                // Input port joins the producer; the output port stays fresh
                // unless an Add downstream merges it.
                uf.unite(in_node[id], out_node[l.inputs[0]]);
                break;
            case LayerKind::Add:
                for (const auto& src : l.inputs) uf.unite(out_node[id], out_node[src]);
                break;
            case LayerKind::ReLU:
            case LayerKind::MaxPool2d:
            case LayerKind::AvgPool2d:
            case LayerKind::GlobalAvgPool:
            case LayerKind::Flatten:
            case LayerKind::Output:
                uf.unite(out_node[id], out_node[l.inputs[0]]);
                break;
            default:
                fail(ErrorCode::Unsupported,
                     std::string("unsupported layer kind '") + layer_kind_name(l.kind) +
                         "' in channel grouping");
        }
    }

    // Channels per channel of the flat value a layer produces: grows through
    // Flatten of a spatial value, feeds Dense input multiplicity.
    std::map<std::string, std::int64_t> block;
    for (const auto& id : order) {
        const Layer& l = *model.find_layer(id);
        switch (l.kind) {
            case LayerKind::Flatten: {
                const auto& in_shape = shapes.at(l.inputs[0]);
                block[id] = in_shape.spatial() ? in_shape.height * in_shape.width
                                               : block[l.inputs[0]];
                break;
            }
            case LayerKind::ReLU:
            case LayerKind::Output:
                block[id] = block.at(l.inputs[0]);
                break;
            case LayerKind::Add: {
                block[id] = block.at(l.inputs[0]);
                for (const auto& src : l.inputs)
                    if (block.at(src) != block[id])
                        fail(ErrorCode::Unsupported,
                             "Add '" + id + "' mixes values with different channel blocks");
                break;
            }
            default:
                block[id] = 1;
        }
    }

    // Group indices in topological order of first appearance; within a layer
    // the input port is visited before the output port.
    std::map<int, int> root_to_group;
    GroupSet set;
    auto group_for = [&](int node) -> ChannelGroup& {
        const int root = uf.find(node);
        auto it = root_to_group.find(root);
        if (it == root_to_group.end()) {
            ChannelGroup g;
            g.index = static_cast<int>(set.groups.size());
            it = root_to_group.emplace(root, g.index).first;
            set.groups.push_back(std::move(g));
        }
        return set.groups[static_cast<std::size_t>(it->second)];
    };

    auto channel_count_of = [&](const Layer& l, PortSide side) -> std::int64_t {
        if (l.kind == LayerKind::Input) return l.input_attrs().channels;
        if (side == PortSide::Output)
            return l.kind == LayerKind::Dense ? l.dense().out_features : l.conv().out_channels;
        if (l.kind == LayerKind::Conv2d) return l.conv().in_channels;
        const std::int64_t m = block.count(l.inputs[0]) ? block.at(l.inputs[0]) : 1;
        return l.dense().in_features / m;
    };

    for (const auto& id : order) {
        const Layer& l = *model.find_layer(id);
        if (l.kind == LayerKind::Input) {
            ChannelGroup& g = group_for(out_node[id]);
            g.members.push_back({id, PortSide::Output, 1});
            g.channel_count = channel_count_of(l, PortSide::Output);
        } else if (l.has_weights()) {
            std::int64_t mult = 1;
            if (l.kind == LayerKind::Dense) {
                mult = block.count(l.inputs[0]) ? block.at(l.inputs[0]) : 1;
                if (mult < 1 || l.dense().in_features % mult != 0)
                    fail(ErrorCode::Internal, "inconsistent channel block for '" + id + "'");
            }
            ChannelGroup& gi = group_for(in_node[id]);
            gi.members.push_back({id, PortSide::Input, mult});
            gi.channel_count = channel_count_of(l, PortSide::Input);
            ChannelGroup& go = group_for(out_node[id]);
            go.members.push_back({id, PortSide::Output, 1});
            go.channel_count = channel_count_of(l, PortSide::Output);
        }
    }

    // Freeze the data and logits dimensions: the group holding the Input
    // layer's output and the group feeding the Output layer are never pruned.
    const Layer& input = model.input_layer();
    const Layer& output = model.output_layer();
    const int input_group = root_to_group.at(uf.find(out_node[input.id]));
    const int output_group = root_to_group.at(uf.find(out_node[output.inputs[0]]));
    for (auto& g : set.groups) g.prunable = g.index != input_group && g.index != output_group;

    // Cross-check member agreement on the channel count.
    for (const auto& g : set.groups) {
        for (const auto& m : g.members) {
            const Layer& l = *model.find_layer(m.layer_id);
            if (channel_count_of(l, m.side) != g.channel_count)
                fail(ErrorCode::Internal, "group " + std::to_string(g.index) +
                                              " members disagree on channel count");
        }
    }
    return set;
}

Signature signature_of(const ModelGraph& model, const GroupSet& groups) {
    (void)model;
    return groups.signature();
}

}  // namespace archtree
