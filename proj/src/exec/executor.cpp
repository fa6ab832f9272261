// Copyright (c) 2026 The archtree authors
// SPDX-License-Identifier: Apache-2.0

#include "exec/executor.hpp"

#include <algorithm>
#include <cmath>

#include "core/error.hpp"

namespace archtree {

void TrainConfig::validate() const {
    if (learning_rate <= 0.0 || batch_size < 1 || batches_per_step < 1)
        fail(ErrorCode::Argument, "train config fields must be positive");
}

const Tensor& ForwardTrace::logits(const ModelGraph& model) const {
    return values.at(model.output_layer().id);
}

namespace {

struct Dims {
    std::int64_t b = 0, c = 0, h = 1, w = 1;
};

Dims dims_of(const Tensor& t) {
    Dims d;
    d.b = t.shape[0];
    d.c = t.shape.size() > 1 ? t.shape[1] : 1;
    if (t.shape.size() == 4) {
        d.h = t.shape[2];
        d.w = t.shape[3];
    }
    return d;
}

void forward_layer(const ModelGraph& model, const Layer& l, ForwardTrace& trace) {
    auto in_value = [&](std::size_t i) -> const Tensor& { return trace.values.at(l.inputs[i]); };
    Tensor& out = trace.values[l.id];

    switch (l.kind) {
        case LayerKind::Input:
            return;  // seeded from the batch
        case LayerKind::Dense: {
            const Tensor& x = in_value(0);
            const auto& at = l.dense();
            if (x.shape.size() != 2 || x.shape[1] != at.in_features)
                fail(ErrorCode::Argument, "Dense '" + l.id + "' fed value of shape " +
                                              shape_to_string(x.shape));
            const Tensor& weight = *model.weight_tensor(l, "weight");
            const Tensor* bias = model.weight_tensor(l, "bias");
            const std::int64_t batch = x.shape[0];
            out.shape = {batch, at.out_features};
            out.data.assign(static_cast<std::size_t>(batch * at.out_features), 0.0f);
            for (std::int64_t b = 0; b < batch; ++b) {
                const float* row = x.data.data() + b * at.in_features;
                for (std::int64_t o = 0; o < at.out_features; ++o) {
                    const float* wrow = weight.data.data() + o * at.in_features;
                    double acc = bias ? bias->data[static_cast<std::size_t>(o)] : 0.0;
                    for (std::int64_t i = 0; i < at.in_features; ++i)
                        acc += static_cast<double>(wrow[i]) * static_cast<double>(row[i]);
                    out.data[static_cast<std::size_t>(b * at.out_features + o)] =
                        static_cast<float>(acc);
                }
            }
            return;
        }
        case LayerKind::Conv2d: {
            const Tensor& x = in_value(0);
            const auto& at = l.conv();
            if (x.shape.size() != 4 || x.shape[1] != at.in_channels)
                fail(ErrorCode::Argument, "Conv2d '" + l.id + "' fed value of shape " +
                                              shape_to_string(x.shape));
            const Tensor& weight = *model.weight_tensor(l, "weight");
            const Tensor* bias = model.weight_tensor(l, "bias");
            const Dims in = dims_of(x);
            const std::int64_t ho = (in.h + 2 * at.padding - at.kernel_h) / at.stride + 1;
            const std::int64_t wo = (in.w + 2 * at.padding - at.kernel_w) / at.stride + 1;
            if (ho < 1 || wo < 1)
                fail(ErrorCode::Argument, "Conv2d '" + l.id + "' output would be empty");
            out.shape = {in.b, at.out_channels, ho, wo};
            out.data.assign(static_cast<std::size_t>(in.b * at.out_channels * ho * wo), 0.0f);
            for (std::int64_t b = 0; b < in.b; ++b)
                for (std::int64_t o = 0; o < at.out_channels; ++o)
                    for (std::int64_t y = 0; y < ho; ++y)
                        for (std::int64_t xo = 0; xo < wo; ++xo) {
                            double acc = bias ? bias->data[static_cast<std::size_t>(o)] : 0.0;
                            for (std::int64_t c = 0; c < at.in_channels; ++c)
                                for (std::int64_t ky = 0; ky < at.kernel_h; ++ky)
                                    for (std::int64_t kx = 0; kx < at.kernel_w; ++kx) {
                                        const std::int64_t iy = y * at.stride - at.padding + ky;
                                        const std::int64_t ix = xo * at.stride - at.padding + kx;
                                        if (iy < 0 || iy >= in.h || ix < 0 || ix >= in.w) continue;
                                        acc += static_cast<double>(
                                                   x.at({b, c, iy, ix})) *
                                               static_cast<double>(weight.at({o, c, ky, kx}));
                                    }
                            out.at({b, o, y, xo}) = static_cast<float>(acc);
                        }
            return;
        }
        case LayerKind::Add: {
            const Tensor& first = in_value(0);
            out.shape = first.shape;
            out.data.resize(first.data.size());
            for (std::size_t i = 0; i < out.data.size(); ++i) {
                double acc = 0.0;
                for (std::size_t k = 0; k < l.inputs.size(); ++k) {
                    const Tensor& v = in_value(k);
                    if (v.shape != first.shape)
                        fail(ErrorCode::Argument, "Add '" + l.id + "' inputs disagree on shape");
                    acc += v.data[i];
                }
                out.data[i] = static_cast<float>(acc);
            }
            return;
        }
        case LayerKind::ReLU: {
            const Tensor& x = in_value(0);
            out.shape = x.shape;
            out.data.resize(x.data.size());
            for (std::size_t i = 0; i < x.data.size(); ++i)
                out.data[i] = x.data[i] > 0.0f ? x.data[i] : 0.0f;
            return;
        }
        case LayerKind::MaxPool2d: {
            const Tensor& x = in_value(0);
            const auto& at = l.pool();
            const Dims in = dims_of(x);
            const std::int64_t ho = (in.h - at.window) / at.stride + 1;
            const std::int64_t wo = (in.w - at.window) / at.stride + 1;
            out.shape = {in.b, in.c, ho, wo};
            out.data.assign(static_cast<std::size_t>(in.b * in.c * ho * wo), 0.0f);
            auto& argmax = trace.pool_argmax[l.id];
            argmax.assign(out.data.size(), 0);
            std::size_t oi = 0;
            for (std::int64_t b = 0; b < in.b; ++b)
                for (std::int64_t c = 0; c < in.c; ++c)
                    for (std::int64_t y = 0; y < ho; ++y)
                        for (std::int64_t xo = 0; xo < wo; ++xo, ++oi) {
                            float best = -std::numeric_limits<float>::infinity();
                            std::int64_t best_idx = 0;
                            for (std::int64_t ky = 0; ky < at.window; ++ky)
                                for (std::int64_t kx = 0; kx < at.window; ++kx) {
                                    const std::int64_t iy = y * at.stride + ky;
                                    const std::int64_t ix = xo * at.stride + kx;
                                    const std::int64_t flat =
                                        ((b * in.c + c) * in.h + iy) * in.w + ix;
                                    const float v = x.data[static_cast<std::size_t>(flat)];
                                    if (v > best) {  // first maximum wins
                                        best = v;
                                        best_idx = flat;
                                    }
                                }
                            out.data[oi] = best;
                            argmax[oi] = best_idx;
                        }
            return;
        }
        case LayerKind::AvgPool2d: {
            const Tensor& x = in_value(0);
            const auto& at = l.pool();
            const Dims in = dims_of(x);
            const std::int64_t ho = (in.h - at.window) / at.stride + 1;
            const std::int64_t wo = (in.w - at.window) / at.stride + 1;
            out.shape = {in.b, in.c, ho, wo};
            out.data.assign(static_cast<std::size_t>(in.b * in.c * ho * wo), 0.0f);
            const double denom = static_cast<double>(at.window * at.window);
            std::size_t oi = 0;
            for (std::int64_t b = 0; b < in.b; ++b)
                for (std::int64_t c = 0; c < in.c; ++c)
                    for (std::int64_t y = 0; y < ho; ++y)
                        for (std::int64_t xo = 0; xo < wo; ++xo, ++oi) {
                            double acc = 0.0;
                            for (std::int64_t ky = 0; ky < at.window; ++ky)
                                for (std::int64_t kx = 0; kx < at.window; ++kx)
                                    acc += x.at({b, c, y * at.stride + ky, xo * at.stride + kx});
                            out.data[oi] = static_cast<float>(acc / denom);
                        }
            return;
        }
        case LayerKind::GlobalAvgPool: {
            const Tensor& x = in_value(0);
            const Dims in = dims_of(x);
            out.shape = {in.b, in.c};
            out.data.assign(static_cast<std::size_t>(in.b * in.c), 0.0f);
            const double denom = static_cast<double>(in.h * in.w);
            for (std::int64_t b = 0; b < in.b; ++b)
                for (std::int64_t c = 0; c < in.c; ++c) {
                    double acc = 0.0;
                    for (std::int64_t y = 0; y < in.h; ++y)
                        for (std::int64_t xo = 0; xo < in.w; ++xo) acc += x.at({b, c, y, xo});
                    out.data[static_cast<std::size_t>(b * in.c + c)] =
                        static_cast<float>(acc / denom);
                }
            return;
        }
        case LayerKind::Flatten: {
            const Tensor& x = in_value(0);
            out.shape = {x.shape[0], shape_numel(x.shape) / x.shape[0]};
            out.data = x.data;  // row-major: channel blocks stay contiguous
            return;
        }
        case LayerKind::Output: {
            out = in_value(0);
            return;
        }
    }
}

}  // namespace

ForwardTrace forward(const ModelGraph& model, const Batch& batch) {
    const Layer& input = model.input_layer();
    const auto& at = input.input_attrs();
    const auto& shape = batch.inputs.shape;
    const bool flat_ok = shape.size() == 2 && shape[1] == at.channels && at.height == 0;
    const bool spatial_ok = shape.size() == 4 && shape[1] == at.channels &&
                            shape[2] == at.height && shape[3] == at.width;
    if (!(flat_ok || spatial_ok))
        fail(ErrorCode::Argument, "batch shape " + shape_to_string(shape) +
                                      " does not match the Input layer");
    if (batch.size() != static_cast<std::int64_t>(batch.labels.size()))
        fail(ErrorCode::Argument, "batch inputs and labels disagree on length");

    ForwardTrace trace;
    trace.values[input.id] = batch.inputs;
    for (const auto& id : topological_order(model)) {
        const Layer& l = *model.find_layer(id);
        if (l.kind != LayerKind::Input) forward_layer(model, l, trace);
    }
    return trace;
}

namespace {

/// Softmax cross-entropy with f64 log-sum-exp; fills dlogits with the mean
/// loss gradient.
double softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                             std::vector<double>& dlogits) {
    const std::int64_t batch = logits.shape[0];
    const std::int64_t classes = logits.shape[1];
    dlogits.assign(static_cast<std::size_t>(batch * classes), 0.0);
    double total = 0.0;
    for (std::int64_t b = 0; b < batch; ++b) {
        const int label = labels[static_cast<std::size_t>(b)];
        if (label < 0 || label >= classes)
            fail(ErrorCode::Argument, "label " + std::to_string(label) +
                                          " outside the class count " + std::to_string(classes));
        const float* row = logits.data.data() + b * classes;
        double mx = row[0];
        for (std::int64_t k = 1; k < classes; ++k) mx = std::max(mx, static_cast<double>(row[k]));
        double sum = 0.0;
        for (std::int64_t k = 0; k < classes; ++k) sum += std::exp(row[k] - mx);
        const double lse = mx + std::log(sum);
        total += lse - row[label];
        for (std::int64_t k = 0; k < classes; ++k) {
            double p = std::exp(row[k] - lse);
            if (k == label) p -= 1.0;
            dlogits[static_cast<std::size_t>(b * classes + k)] =
                p / static_cast<double>(batch);
        }
    }
    return total / static_cast<double>(batch);
}

using GradMap = std::map<std::string, std::vector<double>>;

void backward_layer(const ModelGraph& model, const Layer& l, const ForwardTrace& trace,
                    GradMap& value_grads, GradientStore& weight_grads) {
    auto it = value_grads.find(l.id);
    if (it == value_grads.end()) return;  // no consumer pulled gradient through
    const std::vector<double>& gout = it->second;

    auto grad_into = [&](const std::string& id, std::size_t n) -> std::vector<double>& {
        auto& g = value_grads[id];
        if (g.size() != n) g.assign(n, 0.0);
        return g;
    };

    switch (l.kind) {
        case LayerKind::Input:
            return;
        case LayerKind::Output: {
            const Tensor& x = trace.values.at(l.inputs[0]);
            auto& gin = grad_into(l.inputs[0], x.data.size());
            for (std::size_t i = 0; i < gin.size(); ++i) gin[i] += gout[i];
            return;
        }
        case LayerKind::Dense: {
            const Tensor& x = trace.values.at(l.inputs[0]);
            const auto& at = l.dense();
            const Tensor& weight = *model.weight_tensor(l, "weight");
            const std::int64_t batch = x.shape[0];
            auto& gin = grad_into(l.inputs[0], x.data.size());
            std::vector<double> gw(static_cast<std::size_t>(at.out_features * at.in_features),
                                   0.0);
            std::vector<double> gb(static_cast<std::size_t>(at.out_features), 0.0);
            for (std::int64_t b = 0; b < batch; ++b) {
                const float* row = x.data.data() + b * at.in_features;
                const double* go = gout.data() + b * at.out_features;
                for (std::int64_t o = 0; o < at.out_features; ++o) {
                    const double g = go[o];
                    if (g == 0.0) continue;
                    const float* wrow = weight.data.data() + o * at.in_features;
                    double* gwrow = gw.data() + o * at.in_features;
                    for (std::int64_t i = 0; i < at.in_features; ++i) {
                        gwrow[i] += g * static_cast<double>(row[i]);
                        gin[static_cast<std::size_t>(b * at.in_features + i)] +=
                            g * static_cast<double>(wrow[i]);
                    }
                    gb[static_cast<std::size_t>(o)] += g;
                }
            }
            auto& wg = weight_grads[l.weights.at("weight")];
            wg.assign(gw.begin(), gw.end());
            if (l.weights.count("bias")) {
                auto& bg = weight_grads[l.weights.at("bias")];
                bg.assign(gb.begin(), gb.end());
            }
            return;
        }
        case LayerKind::Conv2d: {
            const Tensor& x = trace.values.at(l.inputs[0]);
            const auto& at = l.conv();
            const Tensor& weight = *model.weight_tensor(l, "weight");
            const Dims in = dims_of(x);
            const std::int64_t ho = (in.h + 2 * at.padding - at.kernel_h) / at.stride + 1;
            const std::int64_t wo = (in.w + 2 * at.padding - at.kernel_w) / at.stride + 1;
            auto& gin = grad_into(l.inputs[0], x.data.size());
            std::vector<double> gw(weight.data.size(), 0.0);
            std::vector<double> gb(static_cast<std::size_t>(at.out_channels), 0.0);
            for (std::int64_t b = 0; b < in.b; ++b)
                for (std::int64_t o = 0; o < at.out_channels; ++o)
                    for (std::int64_t y = 0; y < ho; ++y)
                        for (std::int64_t xo = 0; xo < wo; ++xo) {
                            const double g =
                                gout[static_cast<std::size_t>(((b * at.out_channels + o) * ho + y) * wo + xo)];
                            if (g == 0.0) continue;
                            gb[static_cast<std::size_t>(o)] += g;
                            for (std::int64_t c = 0; c < at.in_channels; ++c)
                                for (std::int64_t ky = 0; ky < at.kernel_h; ++ky)
                                    for (std::int64_t kx = 0; kx < at.kernel_w; ++kx) {
                                        const std::int64_t iy = y * at.stride - at.padding + ky;
                                        const std::int64_t ix = xo * at.stride - at.padding + kx;
                                        if (iy < 0 || iy >= in.h || ix < 0 || ix >= in.w)
                                            continue;
                                        const std::size_t xi = static_cast<std::size_t>(
                                            ((b * in.c + c) * in.h + iy) * in.w + ix);
                                        const std::size_t wi = static_cast<std::size_t>(
                                            ((o * at.in_channels + c) * at.kernel_h + ky) *
                                                at.kernel_w + kx);
                                        gw[wi] += g * static_cast<double>(x.data[xi]);
                                        gin[xi] += g * static_cast<double>(weight.data[wi]);
                                    }
                        }
            auto& wg = weight_grads[l.weights.at("weight")];
            wg.assign(gw.begin(), gw.end());
            if (l.weights.count("bias")) {
                auto& bg = weight_grads[l.weights.at("bias")];
                bg.assign(gb.begin(), gb.end());
            }
            return;
        }
        case LayerKind::Add: {
            for (const auto& src : l.inputs) {
                auto& gin = grad_into(src, gout.size());
                for (std::size_t i = 0; i < gout.size(); ++i) gin[i] += gout[i];
            }
            return;
        }
        case LayerKind::ReLU: {
            const Tensor& x = trace.values.at(l.inputs[0]);
            auto& gin = grad_into(l.inputs[0], x.data.size());
            for (std::size_t i = 0; i < gout.size(); ++i)
                if (x.data[i] > 0.0f) gin[i] += gout[i];
            return;
        }
        case LayerKind::MaxPool2d: {
            const Tensor& x = trace.values.at(l.inputs[0]);
            const auto& argmax = trace.pool_argmax.at(l.id);
            auto& gin = grad_into(l.inputs[0], x.data.size());
            for (std::size_t i = 0; i < gout.size(); ++i)
                gin[static_cast<std::size_t>(argmax[i])] += gout[i];
            return;
        }
        case LayerKind::AvgPool2d: {
            const Tensor& x = trace.values.at(l.inputs[0]);
            const auto& at = l.pool();
            const Dims in = dims_of(x);
            const std::int64_t ho = (in.h - at.window) / at.stride + 1;
            const std::int64_t wo = (in.w - at.window) / at.stride + 1;
            auto& gin = grad_into(l.inputs[0], x.data.size());
            const double denom = static_cast<double>(at.window * at.window);
            std::size_t oi = 0;
            for (std::int64_t b = 0; b < in.b; ++b)
                for (std::int64_t c = 0; c < in.c; ++c)
                    for (std::int64_t y = 0; y < ho; ++y)
                        for (std::int64_t xo = 0; xo < wo; ++xo, ++oi) {
                            const double g = gout[oi] / denom;
                            for (std::int64_t ky = 0; ky < at.window; ++ky)
                                for (std::int64_t kx = 0; kx < at.window; ++kx)
                                    gin[static_cast<std::size_t>(
                                        ((b * in.c + c) * in.h + y * at.stride + ky) * in.w +
                                        xo * at.stride + kx)] += g;
                        }
            return;
        }
        case LayerKind::GlobalAvgPool: {
            const Tensor& x = trace.values.at(l.inputs[0]);
            const Dims in = dims_of(x);
            auto& gin = grad_into(l.inputs[0], x.data.size());
            const double denom = static_cast<double>(in.h * in.w);
            for (std::int64_t b = 0; b < in.b; ++b)
                for (std::int64_t c = 0; c < in.c; ++c) {
                    const double g =
                        gout[static_cast<std::size_t>(b * in.c + c)] / denom;
                    for (std::int64_t y = 0; y < in.h; ++y)
                        for (std::int64_t xo = 0; xo < in.w; ++xo)
                            gin[static_cast<std::size_t>(((b * in.c + c) * in.h + y) * in.w +
                                                         xo)] += g;
                }
            return;
        }
        case LayerKind::Flatten: {
            const Tensor& x = trace.values.at(l.inputs[0]);
            auto& gin = grad_into(l.inputs[0], x.data.size());
            for (std::size_t i = 0; i < gout.size(); ++i) gin[i] += gout[i];
            return;
        }
    }
}

}  // namespace

std::pair<double, GradientStore> loss_and_grads(const ModelGraph& model, const Batch& batch) {
    ForwardTrace trace = forward(model, batch);
    const Tensor& logits = trace.logits(model);

    std::vector<double> dlogits;
    const double loss = softmax_cross_entropy(logits, batch.labels, dlogits);

    GradMap value_grads;
    value_grads[model.output_layer().id] = std::move(dlogits);

    auto order = topological_order(model);
    GradientStore grads;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        backward_layer(model, *model.find_layer(*it), trace, value_grads, grads);

    // Layers that received no gradient still report zeros for their tensors.
    for (const auto& l : model.layers)
        for (const auto& [role, name] : l.weights)
            if (!grads.count(name))
                grads[name].assign(model.tensors.at(name).data.size(), 0.0f);
    return {loss, std::move(grads)};
}

void sgd_step(ModelGraph& model, const GradientStore& grads, double learning_rate) {
    for (const auto& [name, g] : grads) {
        auto it = model.tensors.find(name);
        if (it == model.tensors.end())
            fail(ErrorCode::Argument, "gradient for unknown tensor '" + name + "'");
        if (g.size() != it->second.data.size())
            fail(ErrorCode::Argument, "gradient shape mismatch for tensor '" + name + "'");
        float* w = it->second.data.data();
        for (std::size_t i = 0; i < g.size(); ++i)
            w[i] = static_cast<float>(static_cast<double>(w[i]) -
                                      learning_rate * static_cast<double>(g[i]));
    }
}

double accuracy_on_batch(const ModelGraph& model, const Batch& batch) {
    if (batch.size() == 0) fail(ErrorCode::Argument, "cannot evaluate an empty batch");
    ForwardTrace trace = forward(model, batch);
    const Tensor& logits = trace.logits(model);
    const std::int64_t classes = logits.shape[1];
    std::int64_t correct = 0;
    for (std::int64_t b = 0; b < batch.size(); ++b) {
        const float* row = logits.data.data() + b * classes;
        std::int64_t best = 0;
        for (std::int64_t k = 1; k < classes; ++k)
            if (row[k] > row[best]) best = k;  // ties keep the lowest index
        correct += best == batch.labels[static_cast<std::size_t>(b)];
    }
    return static_cast<double>(correct) / static_cast<double>(batch.size());
}

double evaluate(const ModelGraph& model, const Dataset& dataset, Split split) {
    return accuracy_on_batch(model, dataset.full(split));
}

void initialize_weights(ModelGraph& model, std::uint64_t seed) {
    Rng rng(mix_seed(seed, 0x1417u));
    for (const auto& id : topological_order(model)) {
        Layer* l = model.find_layer(id);
        if (!l->has_weights()) continue;
        const std::int64_t fan_in = l->kind == LayerKind::Dense
                                        ? l->dense().in_features
                                        : l->conv().in_channels * l->conv().kernel_h *
                                              l->conv().kernel_w;
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (const char* role : {"weight", "bias"}) {
            Tensor* t = model.weight_tensor(*l, role);
            if (!t) continue;
            for (auto& v : t->data) v = static_cast<float>(rng.uniform(-bound, bound));
        }
    }
}

}  // namespace archtree
