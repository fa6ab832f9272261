// Copyright (c) 2026 The archtree authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <set>

#include "graph/groups.hpp"
#include "graph/model.hpp"

namespace archtree {

/// Structurally remove the listed channels (indices relative to the current
/// model) from every port of group `group_index`. Returns a deep, independent
/// copy; the source model is untouched. At least one channel must survive and
/// the group must be prunable.
ModelGraph apply_pruning(const ModelGraph& model, const GroupSet& groups, int group_index,
                         const std::set<std::int64_t>& channels);

}  // namespace archtree
