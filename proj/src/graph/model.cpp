// Copyright (c) 2026 The archtree authors
// SPDX-License-Identifier: Apache-2.0

#include "graph/model.hpp"

#include <algorithm>
#include <queue>
#include <set>
#include <sstream>

#include "core/error.hpp"

namespace archtree {

const char* layer_kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::Input: return "Input";
        case LayerKind::Dense: return "Dense";
        case LayerKind::Conv2d: return "Conv2d";
        case LayerKind::Add: return "Add";
        case LayerKind::ReLU: return "ReLU";
        case LayerKind::MaxPool2d: return "MaxPool2d";
        case LayerKind::AvgPool2d: return "AvgPool2d";
        case LayerKind::GlobalAvgPool: return "GlobalAvgPool";
        case LayerKind::Flatten: return "Flatten";
        case LayerKind::Output: return "Output";
    }
    return "?";
}

std::optional<LayerKind> layer_kind_from_name(const std::string& name) {
    static const std::map<std::string, LayerKind> table = {
        {"Input", LayerKind::Input},       {"Dense", LayerKind::Dense},
        {"Conv2d", LayerKind::Conv2d},     {"Add", LayerKind::Add},
        {"ReLU", LayerKind::ReLU},         {"MaxPool2d", LayerKind::MaxPool2d},
        {"AvgPool2d", LayerKind::AvgPool2d}, {"GlobalAvgPool", LayerKind::GlobalAvgPool},
        {"Flatten", LayerKind::Flatten},   {"Output", LayerKind::Output},
    };
    auto it = table.find(name);
    if (it == table.end()) return std::nullopt;
    return it->second;
}

const Layer* ModelGraph::find_layer(const std::string& id) const {
    for (const auto& l : layers)
        if (l.id == id) return &l;
    return nullptr;
}

Layer* ModelGraph::find_layer(const std::string& id) {
    for (auto& l : layers)
        if (l.id == id) return &l;
    return nullptr;
}

static const Layer* find_unique_kind(const ModelGraph& m, LayerKind kind) {
    const Layer* found = nullptr;
    for (const auto& l : m.layers) {
        if (l.kind != kind) continue;
        if (found) return nullptr;
        found = &l;
    }
    return found;
}

const Layer& ModelGraph::input_layer() const {
    const Layer* l = find_unique_kind(*this, LayerKind::Input);
    if (!l) fail(ErrorCode::Validation, "model does not have exactly one Input layer");
    return *l;
}

const Layer& ModelGraph::output_layer() const {
    const Layer* l = find_unique_kind(*this, LayerKind::Output);
    if (!l) fail(ErrorCode::Validation, "model does not have exactly one Output layer");
    return *l;
}

const Tensor* ModelGraph::weight_tensor(const Layer& layer, const std::string& role) const {
    auto it = layer.weights.find(role);
    if (it == layer.weights.end()) return nullptr;
    auto t = tensors.find(it->second);
    return t == tensors.end() ? nullptr : &t->second;
}

Tensor* ModelGraph::weight_tensor(const Layer& layer, const std::string& role) {
    auto it = layer.weights.find(role);
    if (it == layer.weights.end()) return nullptr;
    auto t = tensors.find(it->second);
    return t == tensors.end() ? nullptr : &t->second;
}

std::int64_t ModelGraph::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : tensors) n += t.numel();
    return n;
}

std::vector<std::string> topological_order(const ModelGraph& model) {
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        if (!index.emplace(model.layers[i].id, i).second)
            fail(ErrorCode::Validation, "duplicate layer id '" + model.layers[i].id + "'");
    }
    std::map<std::string, int> pending;
    std::map<std::string, std::vector<std::string>> consumers;
    for (const auto& l : model.layers) {
        pending[l.id] = static_cast<int>(l.inputs.size());
        for (const auto& in : l.inputs) {
            if (!index.count(in))
                fail(ErrorCode::Validation, "layer '" + l.id + "' references unknown input '" + in + "'");
            consumers[in].push_back(l.id);
        }
    }
    // Min-heap on id keeps the order stable among topological peers.
    std::priority_queue<std::string, std::vector<std::string>, std::greater<>> ready;
    for (const auto& [id, deps] : pending)
        if (deps == 0) ready.push(id);

    std::vector<std::string> order;
    order.reserve(model.layers.size());
    while (!ready.empty()) {
        std::string id = ready.top();
        ready.pop();
        order.push_back(id);
        for (const auto& next : consumers[id])
            if (--pending[next] == 0) ready.push(next);
    }
    if (order.size() != model.layers.size())
        fail(ErrorCode::Validation, "layer graph contains a cycle");
    return order;
}

namespace {

struct ShapeAnalysis {
    std::map<std::string, ValueShape> shapes;
    std::vector<Violation> violations;

    void note(const std::string& layer, std::string msg) {
        violations.push_back({layer, std::move(msg)});
    }
};

std::string shape_str(const ValueShape& s) {
    std::ostringstream out;
    if (s.spatial())
        out << "(" << s.channels << "," << s.height << "," << s.width << ")";
    else
        out << "(" << s.channels << ")";
    return out.str();
}

void check_attrs(const Layer& l, ShapeAnalysis& a) {
    switch (l.kind) {
        case LayerKind::Input: {
            if (!std::holds_alternative<InputAttrs>(l.attrs)) {
                a.note(l.id, "Input layer is missing its attributes");
                return;
            }
            const auto& at = l.input_attrs();
            if (at.channels < 1) a.note(l.id, "Input channels must be positive");
            if ((at.height > 0) != (at.width > 0))
                a.note(l.id, "Input height and width must both be zero or both positive");
            break;
        }
        case LayerKind::Dense: {
            if (!std::holds_alternative<DenseAttrs>(l.attrs)) {
                a.note(l.id, "Dense layer is missing its attributes");
                return;
            }
            const auto& at = l.dense();
            if (at.in_features < 1 || at.out_features < 1)
                a.note(l.id, "Dense feature counts must be positive");
            break;
        }
        case LayerKind::Conv2d: {
            if (!std::holds_alternative<Conv2dAttrs>(l.attrs)) {
                a.note(l.id, "Conv2d layer is missing its attributes");
                return;
            }
            const auto& at = l.conv();
            if (at.in_channels < 1 || at.out_channels < 1)
                a.note(l.id, "Conv2d channel counts must be positive");
            if (at.kernel_h < 1 || at.kernel_w < 1) a.note(l.id, "Conv2d kernel must be positive");
            if (at.stride < 1) a.note(l.id, "Conv2d stride must be positive");
            if (at.padding < 0) a.note(l.id, "Conv2d padding must be non-negative");
            break;
        }
        case LayerKind::MaxPool2d:
        case LayerKind::AvgPool2d: {
            if (!std::holds_alternative<PoolAttrs>(l.attrs)) {
                a.note(l.id, "pool layer is missing its attributes");
                return;
            }
            const auto& at = l.pool();
            if (at.window < 1 || at.stride < 1) a.note(l.id, "pool window and stride must be positive");
            break;
        }
        default:
            break;
    }
}

void check_weight_tensors(const ModelGraph& m, const Layer& l, ShapeAnalysis& a) {
    if (!l.has_weights()) {
        if (!l.weights.empty())
            a.note(l.id, std::string(layer_kind_name(l.kind)) + " layer must not own tensors");
        return;
    }
    auto resolve = [&](const std::string& role) -> const Tensor* {
        auto it = l.weights.find(role);
        if (it == l.weights.end()) return nullptr;
        auto t = m.tensors.find(it->second);
        if (t == m.tensors.end()) {
            a.note(l.id, "weight name '" + it->second + "' does not resolve to a tensor");
            return nullptr;
        }
        return &t->second;
    };
    if (!l.weights.count("weight")) {
        a.note(l.id, "missing mandatory 'weight' tensor");
        return;
    }
    for (const auto& [role, name] : l.weights)
        if (role != "weight" && role != "bias")
            a.note(l.id, "unknown weight role '" + role + "'");

    const Tensor* w = resolve("weight");
    const Tensor* b = resolve("bias");
    std::vector<std::int64_t> want_w, want_b;
    if (l.kind == LayerKind::Dense && std::holds_alternative<DenseAttrs>(l.attrs)) {
        want_w = {l.dense().out_features, l.dense().in_features};
        want_b = {l.dense().out_features};
    } else if (l.kind == LayerKind::Conv2d && std::holds_alternative<Conv2dAttrs>(l.attrs)) {
        const auto& at = l.conv();
        want_w = {at.out_channels, at.in_channels, at.kernel_h, at.kernel_w};
        want_b = {at.out_channels};
    } else {
        return;  // attribute violation already recorded
    }
    if (w && w->shape != want_w)
        a.note(l.id, "weight shape " + shape_to_string(w->shape) + " does not match layer params " +
                         shape_to_string(want_w));
    if (l.weights.count("bias") && b && b->shape != want_b)
        a.note(l.id, "bias shape " + shape_to_string(b->shape) + " does not match layer params " +
                         shape_to_string(want_b));
}

void infer_shape(const Layer& l, const std::vector<ValueShape>& in, ShapeAnalysis& a) {
    auto& out = a.shapes[l.id];
    switch (l.kind) {
        case LayerKind::Input: {
            if (!l.inputs.empty()) a.note(l.id, "Input layer cannot have inputs");
            if (!std::holds_alternative<InputAttrs>(l.attrs)) return;
            const auto& at = l.input_attrs();
            out = {at.channels, at.height, at.width};
            return;
        }
        case LayerKind::Dense: {
            if (in.size() != 1) {
                a.note(l.id, "Dense layer needs exactly one input");
                return;
            }
            if (!std::holds_alternative<DenseAttrs>(l.attrs)) return;
            if (in[0].spatial()) {
                a.note(l.id, "Dense layer fed a spatial value; insert Flatten or GlobalAvgPool");
                return;
            }
            if (in[0].features() != l.dense().in_features)
                a.note(l.id, "Dense in_features " + std::to_string(l.dense().in_features) +
                                 " does not match producer features " + std::to_string(in[0].features()));
            out = {l.dense().out_features, 0, 0};
            return;
        }
        case LayerKind::Conv2d: {
            if (in.size() != 1) {
                a.note(l.id, "Conv2d layer needs exactly one input");
                return;
            }
            if (!std::holds_alternative<Conv2dAttrs>(l.attrs)) return;
            const auto& at = l.conv();
            if (!in[0].spatial()) {
                a.note(l.id, "Conv2d layer needs a spatial input");
                return;
            }
            if (in[0].channels != at.in_channels)
                a.note(l.id, "Conv2d in_channels " + std::to_string(at.in_channels) +
                                 " does not match producer channels " + std::to_string(in[0].channels));
            const std::int64_t h = (in[0].height + 2 * at.padding - at.kernel_h) / at.stride + 1;
            const std::int64_t w = (in[0].width + 2 * at.padding - at.kernel_w) / at.stride + 1;
            if (h < 1 || w < 1) {
                a.note(l.id, "Conv2d output would be empty for input " + shape_str(in[0]));
                return;
            }
            out = {at.out_channels, h, w};
            return;
        }
        case LayerKind::Add: {
            if (in.size() < 2) {
                a.note(l.id, "Add layer needs at least two inputs");
                return;
            }
            for (std::size_t i = 1; i < in.size(); ++i) {
                if (in[i].channels != in[0].channels) {
                    a.note(l.id, "Add inputs disagree on channel count (" +
                                     std::to_string(in[0].channels) + " vs " +
                                     std::to_string(in[i].channels) + ")");
                    return;
                }
                if (!(in[i] == in[0])) {
                    a.note(l.id, "Add inputs disagree on shape (" + shape_str(in[0]) + " vs " +
                                     shape_str(in[i]) + ")");
                    return;
                }
            }
            out = in[0];
            return;
        }
        case LayerKind::ReLU: {
            if (in.size() != 1) {
                a.note(l.id, "ReLU layer needs exactly one input");
                return;
            }
            out = in[0];
            return;
        }
        case LayerKind::MaxPool2d:
        case LayerKind::AvgPool2d: {
            if (in.size() != 1) {
                a.note(l.id, "pool layer needs exactly one input");
                return;
            }
            if (!std::holds_alternative<PoolAttrs>(l.attrs)) return;
            if (!in[0].spatial()) {
                a.note(l.id, "pool layer needs a spatial input");
                return;
            }
            const auto& at = l.pool();
            const std::int64_t h = (in[0].height - at.window) / at.stride + 1;
            const std::int64_t w = (in[0].width - at.window) / at.stride + 1;
            if (h < 1 || w < 1) {
                a.note(l.id, "pool output would be empty for input " + shape_str(in[0]));
                return;
            }
            out = {in[0].channels, h, w};
            return;
        }
        case LayerKind::GlobalAvgPool: {
            if (in.size() != 1) {
                a.note(l.id, "GlobalAvgPool layer needs exactly one input");
                return;
            }
            if (!in[0].spatial()) {
                a.note(l.id, "GlobalAvgPool layer needs a spatial input");
                return;
            }
            out = {in[0].channels, 0, 0};
            return;
        }
        case LayerKind::Flatten: {
            if (in.size() != 1) {
                a.note(l.id, "Flatten layer needs exactly one input");
                return;
            }
            out = {in[0].features(), 0, 0};
            return;
        }
        case LayerKind::Output: {
            if (in.size() != 1) {
                a.note(l.id, "Output layer needs exactly one input");
                return;
            }
            out = in[0];
            return;
        }
    }
}

ShapeAnalysis analyze(const ModelGraph& model) {
    ShapeAnalysis a;

    std::set<std::string> seen_ids;
    for (const auto& l : model.layers) {
        if (l.id.empty()) a.note(l.id, "layer id must be non-empty");
        if (!seen_ids.insert(l.id).second) a.note(l.id, "duplicate layer id");
    }

    int inputs = 0, outputs = 0;
    for (const auto& l : model.layers) {
        inputs += l.kind == LayerKind::Input;
        outputs += l.kind == LayerKind::Output;
    }
    if (inputs != 1) a.note("", "graph must contain exactly one Input layer (found " +
                                    std::to_string(inputs) + ")");
    if (outputs != 1) a.note("", "graph must contain exactly one Output layer (found " +
                                     std::to_string(outputs) + ")");

    for (const auto& [name, t] : model.tensors) {
        if (t.shape.empty())
            a.note("", "tensor '" + name + "' has an empty shape");
        else if (!t.shape_matches_data())
            a.note("", "tensor '" + name + "' shape " + shape_to_string(t.shape) +
                           " does not match its data length " + std::to_string(t.data.size()));
    }

    for (const auto& l : model.layers) {
        check_attrs(l, a);
        check_weight_tensors(model, l, a);
    }

    std::vector<std::string> order;
    try {
        order = topological_order(model);
    } catch (const Error& e) {
        a.note("", e.what());
        return a;
    }

    for (const auto& id : order) {
        const Layer& l = *model.find_layer(id);
        std::vector<ValueShape> in;
        bool inputs_known = true;
        for (const auto& src : l.inputs) {
            auto it = a.shapes.find(src);
            if (it == a.shapes.end()) {
                inputs_known = false;
                break;
            }
            in.push_back(it->second);
        }
        if (inputs_known) infer_shape(l, in, a);
    }
    return a;
}

}  // namespace

std::vector<Violation> validate_graph(const ModelGraph& model) {
    return analyze(model).violations;
}

std::map<std::string, ValueShape> propagate_shapes(const ModelGraph& model) {
    ShapeAnalysis a = analyze(model);
    if (!a.violations.empty())
        fail(ErrorCode::Validation,
             "propagate_shapes on an invalid graph: " + a.violations.front().message);
    return a.shapes;
}

}  // namespace archtree
