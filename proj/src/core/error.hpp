// Copyright (c) 2026 The archtree authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace archtree {

enum class ErrorCode {
    Argument,     // bad parameter from the caller
    Io,           // file system failure
    Format,       // malformed file content
    Validation,   // model graph violates an invariant
    Unsupported,  // layer kind or feature outside the format
    Provider,     // latency backend failure
    Unmeasured,   // replay table miss
    Timeout,      // external command exceeded its deadline
    Fingerprint,  // cache file belongs to another model/provider pair
    Infeasible,   // no child satisfies the step latency goal
    Internal,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, std::string message, int detail = -1)
        : std::runtime_error(std::move(message)), code_(code), detail_(detail) {}

    ErrorCode code() const noexcept { return code_; }

    /// Extra integer payload; the failing step index for Infeasible.
    int detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    int detail_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message, int detail = -1) {
    throw Error(code, message, detail);
}

}  // namespace archtree
