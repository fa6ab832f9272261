// Copyright (c) 2026 The archtree authors
// SPDX-License-Identifier: Apache-2.0

#include "importance/importance.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "core/error.hpp"

namespace archtree {

using nlohmann::json;

const char* reduction_name(Reduction r) {
    switch (r) {
        case Reduction::Sum: return "sum";
        case Reduction::Mean: return "mean";
        case Reduction::LInf: return "linf";
    }
    return "?";
}

Reduction reduction_from_name(const std::string& name) {
    if (name == "sum") return Reduction::Sum;
    if (name == "mean") return Reduction::Mean;
    if (name == "linf" || name == "max") return Reduction::LInf;
    fail(ErrorCode::Argument, "unknown reduction '" + name + "'");
}

namespace {

double reduce_strided(const double* base, std::int64_t count, std::int64_t stride, Reduction r) {
    double acc = r == Reduction::LInf ? 0.0 : 0.0;
    for (std::int64_t k = 0; k < count; ++k) {
        const double v = base[k * stride];
        if (r == Reduction::LInf)
            acc = std::max(acc, std::abs(v));
        else
            acc += v;
    }
    if (r == Reduction::Mean) acc /= static_cast<double>(count);
    return acc;
}

}  // namespace

ImportanceState ImportanceState::for_model(const ModelGraph& model) {
    ImportanceState state;
    for (const auto& l : model.layers) {
        if (!l.has_weights()) continue;
        const auto& name = l.weights.at("weight");
        state.per_weight[name].assign(model.tensors.at(name).data.size(), 0.0);
    }
    return state;
}

void accumulate(ImportanceState& state, const ModelGraph& model, const GradientStore& grads) {
    for (auto& [name, acc] : state.per_weight) {
        const Tensor& w = model.tensors.at(name);
        auto git = grads.find(name);
        if (git == grads.end())
            fail(ErrorCode::Argument, "gradient store is missing tensor '" + name + "'");
        const auto& g = git->second;
        if (g.size() != acc.size() || w.data.size() != acc.size())
            fail(ErrorCode::Argument, "importance shape mismatch for tensor '" + name + "'");
        for (std::size_t i = 0; i < acc.size(); ++i)
            acc[i] += std::abs(static_cast<double>(w.data[i]) * static_cast<double>(g[i]));
    }
    ++state.batches;
}

std::vector<double> spatial_reduce(const std::vector<double>& tensor, std::int64_t out_dim,
                                   std::int64_t in_dim, std::int64_t spatial, Reduction r) {
    if (static_cast<std::int64_t>(tensor.size()) != out_dim * in_dim * spatial)
        fail(ErrorCode::Argument, "spatial_reduce: tensor size does not match dims");
    if (spatial == 1) return tensor;  // dense case: identity
    std::vector<double> matrix(static_cast<std::size_t>(out_dim * in_dim));
    for (std::int64_t o = 0; o < out_dim; ++o)
        for (std::int64_t i = 0; i < in_dim; ++i)
            matrix[static_cast<std::size_t>(o * in_dim + i)] =
                reduce_strided(tensor.data() + (o * in_dim + i) * spatial, spatial, 1, r);
    return matrix;
}

std::vector<double> neural_reduce(const std::vector<double>& matrix, std::int64_t out_dim,
                                  std::int64_t in_dim, PortSide port, Reduction r) {
    if (static_cast<std::int64_t>(matrix.size()) != out_dim * in_dim)
        fail(ErrorCode::Argument, "neural_reduce: matrix size does not match dims");
    if (port == PortSide::Output) {
        std::vector<double> v(static_cast<std::size_t>(out_dim));
        for (std::int64_t o = 0; o < out_dim; ++o)
            v[static_cast<std::size_t>(o)] = reduce_strided(matrix.data() + o * in_dim, in_dim, 1, r);
        return v;
    }
    std::vector<double> v(static_cast<std::size_t>(in_dim));
    for (std::int64_t i = 0; i < in_dim; ++i)
        v[static_cast<std::size_t>(i)] = reduce_strided(matrix.data() + i, out_dim, in_dim, r);
    return v;
}

std::vector<double> group_reduce(const std::vector<std::vector<double>>& vectors, Reduction r) {
    if (vectors.empty()) fail(ErrorCode::Argument, "group_reduce: no vectors");
    const std::size_t n = vectors.front().size();
    for (const auto& v : vectors)
        if (v.size() != n) fail(ErrorCode::Argument, "group_reduce: length mismatch");
    std::vector<double> out(n, 0.0);
    for (std::size_t c = 0; c < n; ++c) {
        double acc = 0.0;
        for (const auto& v : vectors) {
            if (r == Reduction::LInf)
                acc = std::max(acc, std::abs(v[c]));
            else
                acc += v[c];
        }
        if (r == Reduction::Mean) acc /= static_cast<double>(vectors.size());
        out[c] = acc;
    }
    return out;
}

GroupImportance compute_group_importance(const ModelGraph& model, const GroupSet& groups,
                                         const ImportanceState& state,
                                         const ReductionConfig& config) {
    GroupImportance gi;
    gi.per_group.resize(groups.size());
    for (const auto& group : groups.groups) {
        std::vector<std::vector<double>> member_vectors;
        for (const auto& member : group.members) {
            const Layer* l = model.find_layer(member.layer_id);
            if (!l || !l->has_weights()) continue;
            const auto& wname = l->weights.at("weight");
            auto sit = state.per_weight.find(wname);
            if (sit == state.per_weight.end())
                fail(ErrorCode::Argument, "importance state is missing tensor '" + wname + "'");

            std::int64_t out_dim, in_dim, spatial;
            if (l->kind == LayerKind::Dense) {
                out_dim = l->dense().out_features;
                in_dim = l->dense().in_features;
                spatial = 1;
            } else {
                out_dim = l->conv().out_channels;
                in_dim = l->conv().in_channels;
                spatial = l->conv().kernel_h * l->conv().kernel_w;
            }
            auto matrix = spatial_reduce(sit->second, out_dim, in_dim, spatial, config.spatial);
            auto vec = neural_reduce(matrix, out_dim, in_dim, member.side, config.neural);
            if (member.side == PortSide::Input && member.multiplicity > 1) {
                // A flattened spatial value packs multiplicity columns per
                // channel; fold each block like extra spatial positions.
                const auto m = member.multiplicity;
                std::vector<double> folded(static_cast<std::size_t>(group.channel_count));
                for (std::int64_t c = 0; c < group.channel_count; ++c)
                    folded[static_cast<std::size_t>(c)] =
                        reduce_strided(vec.data() + c * m, m, 1, config.spatial);
                vec = std::move(folded);
            }
            if (static_cast<std::int64_t>(vec.size()) != group.channel_count)
                fail(ErrorCode::Internal, "importance vector length mismatch in group " +
                                              std::to_string(group.index));
            member_vectors.push_back(std::move(vec));
        }
        auto& slot = gi.per_group[static_cast<std::size_t>(group.index)];
        if (member_vectors.empty())
            slot.assign(static_cast<std::size_t>(group.channel_count), 0.0);
        else
            slot = group_reduce(member_vectors, config.group);
    }
    return gi;
}

std::set<std::int64_t> select_channels(const std::vector<double>& importance,
                                       std::int64_t count) {
    const auto n = static_cast<std::int64_t>(importance.size());
    if (count < 1 || count >= n)
        fail(ErrorCode::Argument, "select_channels: count must lie in [1, channels)");
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
        const double va = importance[static_cast<std::size_t>(a)];
        const double vb = importance[static_cast<std::size_t>(b)];
        return va != vb ? va < vb : a < b;
    });
    return {order.begin(), order.begin() + count};
}

double importance_loss(const std::vector<double>& importance,
                       const std::set<std::int64_t>& pruned) {
    double total = 0.0;
    for (auto idx : pruned) {
        if (idx < 0 || idx >= static_cast<std::int64_t>(importance.size()))
            fail(ErrorCode::Argument, "importance_loss: channel index out of range");
        total += importance[static_cast<std::size_t>(idx)];
    }
    return total;
}

void save_importance(const ModelGraph& model, const ImportanceState& state,
                     const std::string& manifest_path, const std::string& blob_path) {
    const std::string bpath = blob_path.empty() ? (manifest_path + ".bin") : blob_path;
    json index = json::array();
    std::ofstream bf(bpath, std::ios::binary);
    if (!bf) fail(ErrorCode::Io, "cannot write importance blob '" + bpath + "'");
    std::int64_t offset = 0;
    for (const auto& l : model.layers) {
        if (!l.has_weights()) continue;
        const auto& wname = l.weights.at("weight");
        auto it = state.per_weight.find(wname);
        if (it == state.per_weight.end()) continue;
        const Tensor& w = model.tensors.at(wname);
        std::vector<float> f32(it->second.begin(), it->second.end());
        bf.write(reinterpret_cast<const char*>(f32.data()),
                 static_cast<std::streamsize>(f32.size() * sizeof(float)));
        const auto bytes = static_cast<std::int64_t>(f32.size() * sizeof(float));
        index.push_back({{"layer", l.id},
                         {"shape", w.shape},
                         {"offset", offset},
                         {"byte_length", bytes}});
        offset += bytes;
    }
    json manifest = {{"version", 1}, {"batches", state.batches}, {"importance_index", index}};
    std::ofstream mf(manifest_path);
    if (!mf) fail(ErrorCode::Io, "cannot write importance manifest '" + manifest_path + "'");
    mf << manifest.dump(2) << "\n";
}

ImportanceState load_importance(const ModelGraph& model, const std::string& manifest_path,
                                const std::string& blob_path) {
    const std::string bpath = blob_path.empty() ? (manifest_path + ".bin") : blob_path;
    std::ifstream mf(manifest_path);
    if (!mf) fail(ErrorCode::Io, "cannot open importance manifest '" + manifest_path + "'");
    json manifest;
    try {
        manifest = json::parse(mf);
    } catch (const json::exception& e) {
        fail(ErrorCode::Format, "importance manifest is not valid JSON: " + std::string(e.what()));
    }
    std::ifstream bf(bpath, std::ios::binary);
    if (!bf) fail(ErrorCode::Io, "cannot open importance blob '" + bpath + "'");
    std::vector<char> blob((std::istreambuf_iterator<char>(bf)), std::istreambuf_iterator<char>());

    ImportanceState state;
    try {
        state.batches = manifest.value("batches", std::int64_t{0});
        for (const auto& entry : manifest.at("importance_index")) {
            const auto layer_id = entry.at("layer").get<std::string>();
            const Layer* l = model.find_layer(layer_id);
            if (!l || !l->has_weights())
                fail(ErrorCode::Format, "importance entry for unknown prunable layer '" +
                                            layer_id + "'");
            const auto& wname = l->weights.at("weight");
            const Tensor& w = model.tensors.at(wname);
            const auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
            if (shape != w.shape)
                fail(ErrorCode::Format, "importance shape mismatch for layer '" + layer_id + "'");
            const auto offset = entry.at("offset").get<std::int64_t>();
            const auto bytes = entry.at("byte_length").get<std::int64_t>();
            if (offset < 0 || bytes != w.numel() * static_cast<std::int64_t>(sizeof(float)) ||
                offset + bytes > static_cast<std::int64_t>(blob.size()))
                fail(ErrorCode::Format, "importance blob range invalid for layer '" + layer_id + "'");
            std::vector<float> f32(static_cast<std::size_t>(w.numel()));
            std::memcpy(f32.data(), blob.data() + offset, static_cast<std::size_t>(bytes));
            state.per_weight[wname].assign(f32.begin(), f32.end());
        }
    } catch (const json::exception& e) {
        fail(ErrorCode::Format, "importance manifest is malformed: " + std::string(e.what()));
    }
    return state;
}

}  // namespace archtree
