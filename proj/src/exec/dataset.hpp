// Copyright (c) 2026 The archtree authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace archtree {

/// One training/evaluation slice: inputs of shape (batch, channels) or
/// (batch, channels, h, w) plus one integer class label per example.
struct Batch {
    Tensor inputs;
    std::vector<int> labels;

    std::int64_t size() const { return inputs.shape.empty() ? 0 : inputs.shape[0]; }
};

struct BlobsConfig {
    std::uint64_t seed = 0;
    int n_classes = 3;
    int n_features = 8;
    int n_samples = 300;
    // When height/width are set, samples are shaped (channels, height, width)
    // with channels * height * width == n_features.
    std::int64_t channels = 0;
    std::int64_t height = 0;
    std::int64_t width = 0;
    double train_fraction = 0.8;
    double center_spread = 4.0;
    double noise_sigma = 0.8;
};

enum class Split { Train, Validation };

/// In-memory labelled dataset with a fixed train/validation partition.
/// Iteration and batch sampling are deterministic for a fixed seed.
class Dataset {
public:
    static Dataset synthetic_blobs(const BlobsConfig& config);

    /// Header row, one numeric feature per column, labels in `label_column`.
    static Dataset from_csv(const std::string& path, const std::string& label_column,
                            double train_fraction, std::uint64_t seed);

    std::int64_t count(Split split) const;
    int num_classes() const { return num_classes_; }
    std::int64_t example_features() const;

    /// `batch_size` examples drawn from the train split with replacement.
    Batch sample_batch(Rng& rng, std::int64_t batch_size) const;

    /// The whole split in its stored order.
    Batch full(Split split) const;

private:
    std::vector<std::int64_t> sample_shape_;  // per-example shape
    std::vector<float> features_;             // (N, sample_shape...) row-major
    std::vector<int> labels_;
    std::vector<std::int64_t> train_idx_, val_idx_;
    int num_classes_ = 0;

    Batch gather(const std::vector<std::int64_t>& rows) const;
    void split_rows(std::int64_t n, double train_fraction, std::uint64_t seed);
};

}  // namespace archtree
