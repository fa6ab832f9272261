// Copyright (c) 2026 The archtree authors
// SPDX-License-Identifier: Apache-2.0

#include "graph/serialize.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "core/error.hpp"

namespace archtree {

using nlohmann::json;

std::string default_weights_path(const std::string& manifest_path) {
    const auto dot = manifest_path.find_last_of('.');
    const auto slash = manifest_path.find_last_of('/');
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
        return manifest_path + ".bin";
    return manifest_path.substr(0, dot) + ".bin";
}

static json params_json(const Layer& l) {
    json p = json::object();
    switch (l.kind) {
        case LayerKind::Input: {
            const auto& at = l.input_attrs();
            p = {{"channels", at.channels}, {"height", at.height}, {"width", at.width}};
            break;
        }
        case LayerKind::Dense: {
            const auto& at = l.dense();
            p = {{"in_features", at.in_features}, {"out_features", at.out_features}};
            break;
        }
        case LayerKind::Conv2d: {
            const auto& at = l.conv();
            p = {{"in_channels", at.in_channels}, {"out_channels", at.out_channels},
                 {"kernel_h", at.kernel_h},       {"kernel_w", at.kernel_w},
                 {"stride", at.stride},           {"padding", at.padding}};
            break;
        }
        case LayerKind::MaxPool2d:
        case LayerKind::AvgPool2d: {
            const auto& at = l.pool();
            p = {{"window", at.window}, {"stride", at.stride}};
            break;
        }
        default:
            break;
    }
    return p;
}

static LayerAttrs params_from_json(const std::string& id, LayerKind kind, const json& p) {
    auto need = [&](const char* key) -> std::int64_t {
        if (!p.contains(key))
            fail(ErrorCode::Format, "layer '" + id + "' params missing '" + key + "'");
        return p.at(key).get<std::int64_t>();
    };
    switch (kind) {
        case LayerKind::Input:
            return InputAttrs{need("channels"), p.value("height", std::int64_t{0}),
                              p.value("width", std::int64_t{0})};
        case LayerKind::Dense:
            return DenseAttrs{need("in_features"), need("out_features")};
        case LayerKind::Conv2d:
            return Conv2dAttrs{need("in_channels"),
                               need("out_channels"),
                               need("kernel_h"),
                               need("kernel_w"),
                               p.value("stride", std::int64_t{1}),
                               p.value("padding", std::int64_t{0})};
        case LayerKind::MaxPool2d:
        case LayerKind::AvgPool2d:
            return PoolAttrs{need("window"), need("stride")};
        default:
            return std::monostate{};
    }
}

json model_manifest(const ModelGraph& model) {
    json layers = json::array();
    for (const auto& l : model.layers) {
        json entry = {{"id", l.id}, {"kind", layer_kind_name(l.kind)}, {"inputs", l.inputs}};
        json p = params_json(l);
        if (!p.empty()) entry["params"] = p;
        if (!l.weights.empty()) entry["weights"] = l.weights;
        layers.push_back(std::move(entry));
    }

    json index = json::array();
    std::int64_t offset = 0;
    for (const auto& [name, t] : model.tensors) {
        const auto bytes = static_cast<std::int64_t>(t.data.size() * sizeof(float));
        index.push_back({{"name", name},
                         {"dtype", "f32"},
                         {"shape", t.shape},
                         {"offset", offset},
                         {"byte_length", bytes}});
        offset += bytes;
    }

    json manifest = {{"version", 1}, {"layers", layers}, {"tensor_index", index}};
    if (!model.metadata.empty()) manifest["metadata"] = model.metadata;
    return manifest;
}

void save_model(const ModelGraph& model, const std::string& manifest_path,
                const std::string& weights_path) {
    const std::string wpath =
        weights_path.empty() ? default_weights_path(manifest_path) : weights_path;

    std::ofstream mf(manifest_path);
    if (!mf) fail(ErrorCode::Io, "cannot write manifest '" + manifest_path + "'");
    mf << model_manifest(model).dump(2) << "\n";
    if (!mf.good()) fail(ErrorCode::Io, "write failed for '" + manifest_path + "'");

    std::ofstream wf(wpath, std::ios::binary);
    if (!wf) fail(ErrorCode::Io, "cannot write weights '" + wpath + "'");
    for (const auto& [name, t] : model.tensors)
        wf.write(reinterpret_cast<const char*>(t.data.data()),
                 static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!wf.good()) fail(ErrorCode::Io, "write failed for '" + wpath + "'");
}

ModelGraph load_model(const std::string& manifest_path, const std::string& weights_path) {
    std::ifstream mf(manifest_path);
    if (!mf) fail(ErrorCode::Io, "cannot open manifest '" + manifest_path + "'");
    json manifest;
    try {
        manifest = json::parse(mf);
    } catch (const json::exception& e) {
        fail(ErrorCode::Format, "manifest '" + manifest_path + "' is not valid JSON: " + e.what());
    }

    ModelGraph model;
    try {
        if (manifest.value("version", 0) != 1)
            fail(ErrorCode::Format, "unsupported manifest version");
        for (const auto& entry : manifest.at("layers")) {
            Layer l;
            l.id = entry.at("id").get<std::string>();
            const auto kind_name = entry.at("kind").get<std::string>();
            auto kind = layer_kind_from_name(kind_name);
            if (!kind)
                fail(ErrorCode::Unsupported,
                     "layer '" + l.id + "' has unsupported kind '" + kind_name + "'");
            l.kind = *kind;
            if (entry.contains("inputs")) l.inputs = entry.at("inputs").get<std::vector<std::string>>();
            l.attrs = params_from_json(l.id, l.kind, entry.value("params", json::object()));
            if (entry.contains("weights"))
                l.weights = entry.at("weights").get<std::map<std::string, std::string>>();
            model.layers.push_back(std::move(l));
        }
        if (manifest.contains("metadata"))
            model.metadata = manifest.at("metadata").get<std::map<std::string, std::string>>();

        const std::string wpath =
            weights_path.empty() ? default_weights_path(manifest_path) : weights_path;
        std::ifstream wf(wpath, std::ios::binary);
        if (!wf) fail(ErrorCode::Io, "cannot open weights '" + wpath + "'");
        std::vector<char> blob((std::istreambuf_iterator<char>(wf)),
                               std::istreambuf_iterator<char>());

        for (const auto& entry : manifest.at("tensor_index")) {
            const auto name = entry.at("name").get<std::string>();
            if (entry.value("dtype", "f32") != "f32")
                fail(ErrorCode::Format, "tensor '" + name + "' has unsupported dtype");
            Tensor t;
            t.shape = entry.at("shape").get<std::vector<std::int64_t>>();
            const auto offset = entry.at("offset").get<std::int64_t>();
            const auto bytes = entry.at("byte_length").get<std::int64_t>();
            if (offset < 0 || bytes < 0 ||
                offset + bytes > static_cast<std::int64_t>(blob.size()))
                fail(ErrorCode::Format, "tensor '" + name + "' range exceeds the weights file");
            if (bytes != t.numel() * static_cast<std::int64_t>(sizeof(float)))
                fail(ErrorCode::Format, "tensor '" + name + "' byte length does not match shape");
            t.data.resize(static_cast<std::size_t>(t.numel()));
            std::memcpy(t.data.data(), blob.data() + offset, static_cast<std::size_t>(bytes));
            if (!model.tensors.emplace(name, std::move(t)).second)
                fail(ErrorCode::Format, "duplicate tensor '" + name + "'");
        }
    } catch (const json::exception& e) {
        fail(ErrorCode::Format, "manifest '" + manifest_path + "' is malformed: " + e.what());
    }
    return model;
}

}  // namespace archtree
