// Copyright (c) 2026 The archtree authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

namespace archtree {

/// Dense row-major f32 tensor. Shape must be non-empty and its product must
/// equal data.size() whenever the tensor is stored in a model.
struct Tensor {
    std::vector<std::int64_t> shape;
    std::vector<float> data;

    Tensor() = default;
    Tensor(std::vector<std::int64_t> s, std::vector<float> d)
        : shape(std::move(s)), data(std::move(d)) {}

    static Tensor zeros(std::vector<std::int64_t> shape);

    std::int64_t numel() const;
    bool shape_matches_data() const { return numel() == static_cast<std::int64_t>(data.size()); }

    float& at(std::initializer_list<std::int64_t> idx);
    float at(std::initializer_list<std::int64_t> idx) const;

    bool operator==(const Tensor&) const = default;
};

std::int64_t shape_numel(const std::vector<std::int64_t>& shape);

std::string shape_to_string(const std::vector<std::int64_t>& shape);

/// Copy with the listed indices removed along `axis`. Indices must be valid
/// and leave at least one slice behind.
Tensor remove_indices(const Tensor& t, int axis, const std::set<std::int64_t>& indices);

}  // namespace archtree
