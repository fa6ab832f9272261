// Copyright (c) 2026 The archtree authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>

#include "exec/dataset.hpp"
#include "graph/model.hpp"

namespace archtree {

/// Per-tensor-name gradient arrays, matching the owning tensors' shapes.
using GradientStore = std::map<std::string, std::vector<float>>;

/// Per-layer activations kept for the backward pass.
struct ForwardTrace {
    std::map<std::string, Tensor> values;
    // MaxPool2d argmax positions, flattened per output element.
    std::map<std::string, std::vector<std::int64_t>> pool_argmax;

    const Tensor& logits(const ModelGraph& model) const;
};

struct TrainConfig {
    double learning_rate = 0.1;
    std::int64_t batch_size = 32;
    std::int64_t batches_per_step = 32;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Runs the layer composition on a batch. Dot products and reductions
/// accumulate in 64-bit, activations are stored in 32-bit.
ForwardTrace forward(const ModelGraph& model, const Batch& batch);

/// Mean softmax cross-entropy over the batch plus gradients for every weight
/// tensor in the model.
std::pair<double, GradientStore> loss_and_grads(const ModelGraph& model, const Batch& batch);

/// In-place w <- w - lr * g on a mutable training copy.
void sgd_step(ModelGraph& model, const GradientStore& grads, double learning_rate);

/// Fraction of argmax-correct predictions on a split; argmax ties break
/// toward the lowest class index.
double evaluate(const ModelGraph& model, const Dataset& dataset, Split split);

double accuracy_on_batch(const ModelGraph& model, const Batch& batch);

/// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] for weights and biases,
/// drawn from `seed` in tensor-name order.
void initialize_weights(ModelGraph& model, std::uint64_t seed);

}  // namespace archtree
