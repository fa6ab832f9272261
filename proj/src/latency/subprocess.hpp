// Copyright (c) 2026 The archtree authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

namespace archtree {

struct CommandResult {
    int exit_code = -1;
    bool timed_out = false;
    std::string out;
    std::string err;
};

/// Runs `command` through /bin/sh, capturing stdout and stderr separately.
/// The process group is killed once the deadline expires.
CommandResult run_command(const std::string& command, double timeout_seconds);

}  // namespace archtree
