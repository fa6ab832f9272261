// Copyright (c) 2026 The archtree authors
// SPDX-License-Identifier: Apache-2.0

#include "exec/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "core/error.hpp"

namespace archtree {

std::int64_t Dataset::example_features() const {
    return shape_numel(sample_shape_);
}

void Dataset::split_rows(std::int64_t n, double train_fraction, std::uint64_t seed) {
    if (train_fraction <= 0.0 || train_fraction >= 1.0)
        fail(ErrorCode::Argument, "train fraction must lie strictly between 0 and 1");
    std::vector<std::int64_t> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(mix_seed(seed, 0x5714Fu));
    for (std::int64_t i = n - 1; i > 0; --i)
        std::swap(perm[static_cast<std::size_t>(i)],
                  perm[static_cast<std::size_t>(rng.uniform_int(0, i))]);
    auto cut = static_cast<std::int64_t>(static_cast<double>(n) * train_fraction);
    cut = std::clamp<std::int64_t>(cut, 1, n - 1);
    train_idx_.assign(perm.begin(), perm.begin() + cut);
    val_idx_.assign(perm.begin() + cut, perm.end());
}

Dataset Dataset::synthetic_blobs(const BlobsConfig& config) {
    if (config.n_classes < 2) fail(ErrorCode::Argument, "blobs need at least two classes");
    if (config.n_features < 1 || config.n_samples < 2)
        fail(ErrorCode::Argument, "blobs need positive feature and sample counts");

    Dataset d;
    if (config.height > 0) {
        if (config.channels * config.height * config.width != config.n_features)
            fail(ErrorCode::Argument, "blobs sample shape does not multiply out to n_features");
        d.sample_shape_ = {config.channels, config.height, config.width};
    } else {
        d.sample_shape_ = {config.n_features};
    }
    d.num_classes_ = config.n_classes;

    Rng rng(mix_seed(config.seed, 0xB10B5u));
    std::vector<std::vector<float>> centers(static_cast<std::size_t>(config.n_classes));
    for (auto& c : centers) {
        c.resize(static_cast<std::size_t>(config.n_features));
        for (auto& v : c)
            v = static_cast<float>(rng.uniform(-config.center_spread, config.center_spread));
    }

    d.features_.resize(static_cast<std::size_t>(config.n_samples) *
                       static_cast<std::size_t>(config.n_features));
    d.labels_.resize(static_cast<std::size_t>(config.n_samples));
    for (int i = 0; i < config.n_samples; ++i) {
        const int label = i % config.n_classes;
        d.labels_[static_cast<std::size_t>(i)] = label;
        float* row = d.features_.data() +
                     static_cast<std::size_t>(i) * static_cast<std::size_t>(config.n_features);
        for (int f = 0; f < config.n_features; ++f)
            row[f] = centers[static_cast<std::size_t>(label)][static_cast<std::size_t>(f)] +
                     static_cast<float>(config.noise_sigma * rng.gaussian());
    }
    d.split_rows(config.n_samples, config.train_fraction, config.seed);
    return d;
}

Dataset Dataset::from_csv(const std::string& path, const std::string& label_column,
                          double train_fraction, std::uint64_t seed) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot open dataset '" + path + "'");

    auto split_line = [](const std::string& line) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        return cells;
    };

    std::string header;
    if (!std::getline(in, header)) fail(ErrorCode::Format, "dataset '" + path + "' is empty");
    const auto columns = split_line(header);
    std::int64_t label_col = -1;
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == label_column) label_col = static_cast<std::int64_t>(i);
    if (label_col < 0)
        fail(ErrorCode::Format, "dataset '" + path + "' has no column '" + label_column + "'");

    Dataset d;
    const auto n_features = static_cast<std::int64_t>(columns.size()) - 1;
    if (n_features < 1) fail(ErrorCode::Format, "dataset '" + path + "' has no feature columns");
    d.sample_shape_ = {n_features};

    std::string line;
    std::size_t line_no = 1;
    int max_label = -1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = split_line(line);
        if (cells.size() != columns.size())
            fail(ErrorCode::Format, "dataset '" + path + "' line " + std::to_string(line_no) +
                                        " has the wrong number of columns");
        try {
            for (std::size_t i = 0; i < cells.size(); ++i) {
                if (static_cast<std::int64_t>(i) == label_col) {
                    const int label = std::stoi(cells[i]);
                    if (label < 0) fail(ErrorCode::Format, "negative label");
                    d.labels_.push_back(label);
                    max_label = std::max(max_label, label);
                } else {
                    d.features_.push_back(std::stof(cells[i]));
                }
            }
        } catch (const std::exception&) {
            fail(ErrorCode::Format, "dataset '" + path + "' line " + std::to_string(line_no) +
                                        " has a non-numeric cell");
        }
    }
    const auto n = static_cast<std::int64_t>(d.labels_.size());
    if (n < 2) fail(ErrorCode::Format, "dataset '" + path + "' needs at least two rows");
    d.num_classes_ = max_label + 1;
    d.split_rows(n, train_fraction, seed);
    return d;
}

std::int64_t Dataset::count(Split split) const {
    return static_cast<std::int64_t>(split == Split::Train ? train_idx_.size()
                                                           : val_idx_.size());
}

Batch Dataset::gather(const std::vector<std::int64_t>& rows) const {
    const auto per = example_features();
    Batch b;
    b.inputs.shape.push_back(static_cast<std::int64_t>(rows.size()));
    b.inputs.shape.insert(b.inputs.shape.end(), sample_shape_.begin(), sample_shape_.end());
    b.inputs.data.reserve(rows.size() * static_cast<std::size_t>(per));
    b.labels.reserve(rows.size());
    for (auto r : rows) {
        const float* src = features_.data() + static_cast<std::size_t>(r * per);
        b.inputs.data.insert(b.inputs.data.end(), src, src + per);
        b.labels.push_back(labels_[static_cast<std::size_t>(r)]);
    }
    return b;
}

Batch Dataset::sample_batch(Rng& rng, std::int64_t batch_size) const {
    if (batch_size < 1) fail(ErrorCode::Argument, "batch size must be positive");
    if (train_idx_.empty()) fail(ErrorCode::Argument, "train split is empty");
    std::vector<std::int64_t> rows;
    rows.reserve(static_cast<std::size_t>(batch_size));
    for (std::int64_t i = 0; i < batch_size; ++i)
        rows.push_back(
            train_idx_[static_cast<std::size_t>(rng.uniform_int(0, count(Split::Train) - 1))]);
    return gather(rows);
}

Batch Dataset::full(Split split) const {
    const auto& idx = split == Split::Train ? train_idx_ : val_idx_;
    if (idx.empty()) fail(ErrorCode::Argument, "requested split is empty");
    return gather(idx);
}

}  // namespace archtree
