// Copyright (c) 2026 The archtree authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "core/tensor.hpp"

namespace archtree {

enum class LayerKind {
    Input,
    Dense,
    Conv2d,
    Add,
    ReLU,
    MaxPool2d,
    AvgPool2d,
    GlobalAvgPool,
    Flatten,
    Output,
};

const char* layer_kind_name(LayerKind kind);
std::optional<LayerKind> layer_kind_from_name(const std::string& name);

/// Network entry point. height/width of 0 means a flat (batch, channels)
/// input; otherwise the input is (batch, channels, height, width).
struct InputAttrs {
    std::int64_t channels = 0;
    std::int64_t height = 0;
    std::int64_t width = 0;
};

struct DenseAttrs {
    std::int64_t in_features = 0;
    std::int64_t out_features = 0;
};

struct Conv2dAttrs {
    std::int64_t in_channels = 0;
    std::int64_t out_channels = 0;
    std::int64_t kernel_h = 1;
    std::int64_t kernel_w = 1;
    std::int64_t stride = 1;
    std::int64_t padding = 0;
};

struct PoolAttrs {
    std::int64_t window = 2;
    std::int64_t stride = 2;
};

using LayerAttrs = std::variant<std::monostate, InputAttrs, DenseAttrs, Conv2dAttrs, PoolAttrs>;

struct Layer {
    std::string id;
    LayerKind kind = LayerKind::Input;
    std::vector<std::string> inputs;
    LayerAttrs attrs;
    /// Role ("weight", "bias") to tensor name in the model store. Only Dense
    /// and Conv2d own tensors; "weight" is mandatory there, "bias" optional.
    std::map<std::string, std::string> weights;

    bool has_weights() const { return kind == LayerKind::Dense || kind == LayerKind::Conv2d; }
    const DenseAttrs& dense() const { return std::get<DenseAttrs>(attrs); }
    DenseAttrs& dense() { return std::get<DenseAttrs>(attrs); }
    const Conv2dAttrs& conv() const { return std::get<Conv2dAttrs>(attrs); }
    Conv2dAttrs& conv() { return std::get<Conv2dAttrs>(attrs); }
    const PoolAttrs& pool() const { return std::get<PoolAttrs>(attrs); }
    const InputAttrs& input_attrs() const { return std::get<InputAttrs>(attrs); }
};

/// A small DAG of typed layers plus the tensor store their weights live in.
/// Instances are treated as immutable values: pruning and training act on
/// copies, so a graph can be shared read-only across workers.
struct ModelGraph {
    std::vector<Layer> layers;
    std::map<std::string, Tensor> tensors;
    std::map<std::string, std::string> metadata;

    const Layer* find_layer(const std::string& id) const;
    Layer* find_layer(const std::string& id);
    const Layer& input_layer() const;
    const Layer& output_layer() const;

    const Tensor* weight_tensor(const Layer& layer, const std::string& role) const;
    Tensor* weight_tensor(const Layer& layer, const std::string& role);

    std::int64_t parameter_count() const;
};

struct Violation {
    std::string layer_id;  // empty for graph-level problems
    std::string message;
};

/// Structural checks for every Layer/ModelGraph invariant. Returns one entry
/// per broken rule; an empty list means the graph is well formed.
std::vector<Violation> validate_graph(const ModelGraph& model);

/// Kahn topological order with lexicographic tie-break on layer ids, so the
/// order (and everything derived from it) is deterministic.
/// Fails on cycles or dangling input references.
std::vector<std::string> topological_order(const ModelGraph& model);

/// Shape of the value a layer produces, per example in the batch.
struct ValueShape {
    std::int64_t channels = 0;
    std::int64_t height = 0;  // 0 when flat
    std::int64_t width = 0;

    bool spatial() const { return height > 0; }
    std::int64_t features() const { return spatial() ? channels * height * width : channels; }
    bool operator==(const ValueShape&) const = default;
};

/// Per-layer output shapes. Requires a graph that passes validate_graph.
std::map<std::string, ValueShape> propagate_shapes(const ModelGraph& model);

}  // namespace archtree
