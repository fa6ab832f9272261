// Copyright (c) 2026 The archtree authors
// SPDX-License-Identifier: Apache-2.0

#include "support/reference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace archtree::testing {

namespace {

struct Value {
    std::vector<std::int64_t> shape;
    std::vector<double> data;

    std::int64_t dim(std::size_t i) const { return shape[i]; }
    double at4(std::int64_t b, std::int64_t c, std::int64_t y, std::int64_t x) const {
        return data[static_cast<std::size_t>(((b * shape[1] + c) * shape[2] + y) * shape[3] + x)];
    }
};

struct Interp {
    const ModelGraph& model;
    const WeightMap& weights;
    std::map<std::string, Value> memo;

    const std::vector<double>& w(const Layer& l, const char* role) const {
        return weights.at(l.weights.at(role));
    }
    bool has(const Layer& l, const char* role) const { return l.weights.count(role) > 0; }

    const Value& eval(const std::string& id) {
        auto it = memo.find(id);
        if (it != memo.end()) return it->second;
        const Layer& l = *model.find_layer(id);
        Value v = compute(l);
        return memo.emplace(id, std::move(v)).first->second;
    }

    Value compute(const Layer& l) {
        switch (l.kind) {
            case LayerKind::Input:
                throw std::logic_error("input must be seeded");
            case LayerKind::Dense: {
                const Value& x = eval(l.inputs[0]);
                const auto o = l.dense().out_features;
                const auto i_dim = l.dense().in_features;
                const auto& wgt = w(l, "weight");
                Value out{{x.shape[0], o}, {}};
                out.data.resize(static_cast<std::size_t>(x.shape[0] * o));
                for (std::int64_t b = 0; b < x.shape[0]; ++b)
                    for (std::int64_t oo = 0; oo < o; ++oo) {
                        double acc = has(l, "bias") ? w(l, "bias")[static_cast<std::size_t>(oo)]
                                                    : 0.0;
                        for (std::int64_t ii = 0; ii < i_dim; ++ii)
                            acc += wgt[static_cast<std::size_t>(oo * i_dim + ii)] *
                                   x.data[static_cast<std::size_t>(b * i_dim + ii)];
                        out.data[static_cast<std::size_t>(b * o + oo)] = acc;
                    }
                return out;
            }
            case LayerKind::Conv2d: {
                const Value& x = eval(l.inputs[0]);
                const auto& a = l.conv();
                const std::int64_t ho = (x.dim(2) + 2 * a.padding - a.kernel_h) / a.stride + 1;
                const std::int64_t wo = (x.dim(3) + 2 * a.padding - a.kernel_w) / a.stride + 1;
                const auto& wgt = w(l, "weight");
                Value out{{x.shape[0], a.out_channels, ho, wo}, {}};
                out.data.resize(static_cast<std::size_t>(x.shape[0] * a.out_channels * ho * wo));
                std::size_t oi = 0;
                for (std::int64_t b = 0; b < x.shape[0]; ++b)
                    for (std::int64_t o = 0; o < a.out_channels; ++o)
                        for (std::int64_t y = 0; y < ho; ++y)
                            for (std::int64_t xx = 0; xx < wo; ++xx, ++oi) {
                                double acc = has(l, "bias")
                                                 ? w(l, "bias")[static_cast<std::size_t>(o)]
                                                 : 0.0;
                                for (std::int64_t c = 0; c < a.in_channels; ++c)
                                    for (std::int64_t ky = 0; ky < a.kernel_h; ++ky)
                                        for (std::int64_t kx = 0; kx < a.kernel_w; ++kx) {
                                            const std::int64_t iy = y * a.stride - a.padding + ky;
                                            const std::int64_t ix = xx * a.stride - a.padding + kx;
                                            if (iy < 0 || iy >= x.dim(2) || ix < 0 ||
                                                ix >= x.dim(3))
                                                continue;
                                            acc += x.at4(b, c, iy, ix) *
                                                   wgt[static_cast<std::size_t>(
                                                       ((o * a.in_channels + c) * a.kernel_h +
                                                        ky) * a.kernel_w + kx)];
                                        }
                                out.data[oi] = acc;
                            }
                return out;
            }
            case LayerKind::Add: {
                Value out = eval(l.inputs[0]);
                for (std::size_t k = 1; k < l.inputs.size(); ++k) {
                    const Value& v = eval(l.inputs[k]);
                    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += v.data[i];
                }
                return out;
            }
            case LayerKind::ReLU: {
                Value out = eval(l.inputs[0]);
                for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
                return out;
            }
            case LayerKind::MaxPool2d:
            case LayerKind::AvgPool2d: {
                const Value& x = eval(l.inputs[0]);
                const auto& a = l.pool();
                const std::int64_t ho = (x.dim(2) - a.window) / a.stride + 1;
                const std::int64_t wo = (x.dim(3) - a.window) / a.stride + 1;
                Value out{{x.shape[0], x.shape[1], ho, wo}, {}};
                out.data.resize(static_cast<std::size_t>(x.shape[0] * x.shape[1] * ho * wo));
                std::size_t oi = 0;
                for (std::int64_t b = 0; b < x.shape[0]; ++b)
                    for (std::int64_t c = 0; c < x.shape[1]; ++c)
                        for (std::int64_t y = 0; y < ho; ++y)
                            for (std::int64_t xx = 0; xx < wo; ++xx, ++oi) {
                                double acc = l.kind == LayerKind::MaxPool2d
                                                 ? -1e300
                                                 : 0.0;
                                for (std::int64_t ky = 0; ky < a.window; ++ky)
                                    for (std::int64_t kx = 0; kx < a.window; ++kx) {
                                        const double v =
                                            x.at4(b, c, y * a.stride + ky, xx * a.stride + kx);
                                        if (l.kind == LayerKind::MaxPool2d)
                                            acc = std::max(acc, v);
                                        else
                                            acc += v;
                                    }
                                if (l.kind == LayerKind::AvgPool2d)
                                    acc /= static_cast<double>(a.window * a.window);
                                out.data[oi] = acc;
                            }
                return out;
            }
            case LayerKind::GlobalAvgPool: {
                const Value& x = eval(l.inputs[0]);
                Value out{{x.shape[0], x.shape[1]}, {}};
                out.data.resize(static_cast<std::size_t>(x.shape[0] * x.shape[1]));
                for (std::int64_t b = 0; b < x.shape[0]; ++b)
                    for (std::int64_t c = 0; c < x.shape[1]; ++c) {
                        double acc = 0.0;
                        for (std::int64_t y = 0; y < x.dim(2); ++y)
                            for (std::int64_t xx = 0; xx < x.dim(3); ++xx)
                                acc += x.at4(b, c, y, xx);
                        out.data[static_cast<std::size_t>(b * x.shape[1] + c)] =
                            acc / static_cast<double>(x.dim(2) * x.dim(3));
                    }
                return out;
            }
            case LayerKind::Flatten: {
                const Value& x = eval(l.inputs[0]);
                std::int64_t per = 1;
                for (std::size_t d = 1; d < x.shape.size(); ++d) per *= x.shape[d];
                Value out{{x.shape[0], per}, x.data};
                return out;
            }
            case LayerKind::Output:
                return eval(l.inputs[0]);
        }
        throw std::logic_error("unhandled kind");
    }
};

Value batch_value(const Batch& batch) {
    Value v;
    v.shape = batch.inputs.shape;
    v.data.assign(batch.inputs.data.begin(), batch.inputs.data.end());
    return v;
}

}  // namespace

WeightMap weights_as_f64(const ModelGraph& model) {
    WeightMap out;
    for (const auto& [name, t] : model.tensors) out[name].assign(t.data.begin(), t.data.end());
    return out;
}

double reference_loss(const ModelGraph& model, const WeightMap& weights, const Batch& batch) {
    Interp interp{model, weights, {}};
    interp.memo.emplace(model.input_layer().id, batch_value(batch));
    const Value& logits = interp.eval(model.output_layer().id);
    const std::int64_t classes = logits.shape[1];
    double total = 0.0;
    for (std::int64_t b = 0; b < logits.shape[0]; ++b) {
        const double* row = logits.data.data() + b * classes;
        double mx = row[0];
        for (std::int64_t k = 1; k < classes; ++k) mx = std::max(mx, row[k]);
        double sum = 0.0;
        for (std::int64_t k = 0; k < classes; ++k) sum += std::exp(row[k] - mx);
        total += mx + std::log(sum) - row[batch.labels[static_cast<std::size_t>(b)]];
    }
    return total / static_cast<double>(logits.shape[0]);
}

WeightMap reference_fd_grads(const ModelGraph& model, const Batch& batch, double h) {
    WeightMap weights = weights_as_f64(model);
    WeightMap grads;
    for (auto& [name, values] : weights) {
        auto& g = grads[name];
        g.resize(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double original = values[i];
            values[i] = original + h;
            const double up = reference_loss(model, weights, batch);
            values[i] = original - h;
            const double down = reference_loss(model, weights, batch);
            values[i] = original;
            g[i] = (up - down) / (2.0 * h);
        }
    }
    return grads;
}

bool fd_safe(const ModelGraph& model, const Batch& batch, double margin) {
    Interp interp{model, weights_as_f64(model), {}};
    interp.memo.emplace(model.input_layer().id, batch_value(batch));
    interp.eval(model.output_layer().id);
    for (const auto& l : model.layers) {
        if (l.kind == LayerKind::ReLU) {
            for (const double v : interp.memo.at(l.inputs[0]).data)
                if (std::abs(v) < margin) return false;
        }
        if (l.kind == LayerKind::MaxPool2d) {
            const Value& x = interp.memo.at(l.inputs[0]);
            const auto& a = l.pool();
            const std::int64_t ho = (x.dim(2) - a.window) / a.stride + 1;
            const std::int64_t wo = (x.dim(3) - a.window) / a.stride + 1;
            for (std::int64_t b = 0; b < x.shape[0]; ++b)
                for (std::int64_t c = 0; c < x.shape[1]; ++c)
                    for (std::int64_t y = 0; y < ho; ++y)
                        for (std::int64_t xx = 0; xx < wo; ++xx) {
                            double best = -1e300, second = -1e300;
                            for (std::int64_t ky = 0; ky < a.window; ++ky)
                                for (std::int64_t kx = 0; kx < a.window; ++kx) {
                                    const double v = x.at4(b, c, y * a.stride + ky,
                                                           xx * a.stride + kx);
                                    if (v > best) {
                                        second = best;
                                        best = v;
                                    } else if (v > second) {
                                        second = v;
                                    }
                                }
                            if (best - second < margin) return false;
                        }
        }
    }
    return true;
}

}  // namespace archtree::testing
