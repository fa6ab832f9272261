// Copyright (c) 2026 The archtree authors
// SPDX-License-Identifier: Apache-2.0

#include "core/tensor.hpp"

#include <numeric>
#include <sstream>

#include "core/error.hpp"

namespace archtree {

std::int64_t shape_numel(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (auto extent : shape) n *= extent;
    return shape.empty() ? 0 : n;
}

Tensor Tensor::zeros(std::vector<std::int64_t> shape) {
    Tensor t;
    t.shape = std::move(shape);
    t.data.assign(static_cast<std::size_t>(shape_numel(t.shape)), 0.0f);
    return t;
}

std::int64_t Tensor::numel() const { return shape_numel(shape); }

static std::size_t flat_index(const Tensor& t, std::initializer_list<std::int64_t> idx) {
    std::size_t flat = 0;
    std::size_t dim = 0;
    for (auto i : idx) {
        flat = flat * static_cast<std::size_t>(t.shape[dim]) + static_cast<std::size_t>(i);
        ++dim;
    }
    return flat;
}

float& Tensor::at(std::initializer_list<std::int64_t> idx) { return data[flat_index(*this, idx)]; }
float Tensor::at(std::initializer_list<std::int64_t> idx) const { return data[flat_index(*this, idx)]; }

std::string shape_to_string(const std::vector<std::int64_t>& shape) {
    std::ostringstream out;
    out << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << ",";
        out << shape[i];
    }
    out << ")";
    return out.str();
}

Tensor remove_indices(const Tensor& t, int axis, const std::set<std::int64_t>& indices) {
    if (axis < 0 || axis >= static_cast<int>(t.shape.size()))
        fail(ErrorCode::Argument, "remove_indices: axis out of range");
    const std::int64_t extent = t.shape[static_cast<std::size_t>(axis)];
    for (auto i : indices)
        if (i < 0 || i >= extent)
            fail(ErrorCode::Argument, "remove_indices: index out of range");
    if (static_cast<std::int64_t>(indices.size()) >= extent)
        fail(ErrorCode::Argument, "remove_indices: would remove every slice");

    std::int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= t.shape[static_cast<std::size_t>(d)];
    for (std::size_t d = static_cast<std::size_t>(axis) + 1; d < t.shape.size(); ++d) inner *= t.shape[d];

    Tensor out;
    out.shape = t.shape;
    out.shape[static_cast<std::size_t>(axis)] = extent - static_cast<std::int64_t>(indices.size());
    out.data.reserve(static_cast<std::size_t>(shape_numel(out.shape)));
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t e = 0; e < extent; ++e) {
            if (indices.count(e)) continue;
            const auto* src = t.data.data() + (o * extent + e) * inner;
            out.data.insert(out.data.end(), src, src + inner);
        }
    }
    return out;
}

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::Argument: return "argument";
        case ErrorCode::Io: return "io";
        case ErrorCode::Format: return "format";
        case ErrorCode::Validation: return "validation";
        case ErrorCode::Unsupported: return "unsupported";
        case ErrorCode::Provider: return "provider";
        case ErrorCode::Unmeasured: return "unmeasured";
        case ErrorCode::Timeout: return "timeout";
        case ErrorCode::Fingerprint: return "fingerprint";
        case ErrorCode::Infeasible: return "infeasible";
        case ErrorCode::Internal: return "internal";
    }
    return "unknown";
}

}  // namespace archtree
