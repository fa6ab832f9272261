// Copyright (c) 2026 The archtree authors
// SPDX-License-Identifier: Apache-2.0
//
// Exhaustive enumeration of the blossom-reachable signature space, used as
// the oracle for the tree search. Independent of the search module: it
// re-derives the stride ladder and the per-signature cumulative importance
// loss directly from first principles.

#pragma once

#include <functional>
#include <map>
#include <set>
#include <vector>

#include "graph/groups.hpp"
#include "search/schedule.hpp"

namespace archtree::testing {

struct EnumerationResult {
    bool infeasible = false;
    int failing_step = 0;
    // Reachable leaf signatures after the last step, with their cumulative
    // importance loss (sum of the removed channels' root importances).
    std::map<Signature, double> leaves;
};

/// Cumulative loss of a signature under static root importances: per group,
/// the (root_count - remaining) smallest values are the pruned ones.
inline double static_cumulative_loss(const Signature& root, const Signature& sig,
                                     const std::vector<std::vector<double>>& importance) {
    double total = 0.0;
    for (std::size_t g = 0; g < importance.size(); ++g) {
        const auto removed = root.counts[g] - sig.counts[g];
        if (removed <= 0) continue;
        std::vector<double> sorted = importance[g];
        std::sort(sorted.begin(), sorted.end());
        for (std::int64_t k = 0; k < removed; ++k) total += sorted[static_cast<std::size_t>(k)];
    }
    return total;
}

inline EnumerationResult enumerate_blossom_space(
    const Signature& root, const std::vector<bool>& prunable,
    const std::vector<std::vector<double>>& importance, double tau_root, double tau_goal,
    int steps, const StepPolicy& policy,
    const std::function<double(const Signature&)>& latency) {
    EnumerationResult result;
    std::set<Signature> seen = {root};
    std::set<Signature> frontier = {root};

    for (int step = 1; step <= steps; ++step) {
        const double tau =
            (static_cast<double>(steps - step) * tau_root + static_cast<double>(step) * tau_goal) /
            static_cast<double>(steps);
        std::set<Signature> next;
        for (const Signature& sig : frontier) {
            for (std::size_t g = 0; g < prunable.size(); ++g) {
                if (!prunable[g] || sig.counts[g] <= 1) continue;
                std::int64_t c = sig.counts[g];
                for (;;) {
                    const std::int64_t stride = exploration_step(c, policy);
                    c = std::max<std::int64_t>(c - stride, 1);
                    Signature candidate = sig;
                    candidate.counts[g] = c;
                    if (latency(candidate) <= tau) {
                        if (!seen.count(candidate)) next.insert(candidate);
                        break;
                    }
                    if (c == 1) break;  // exhausted above the goal
                }
            }
        }
        if (next.empty()) {
            result.infeasible = true;
            result.failing_step = step;
            return result;
        }
        for (const auto& s : next) seen.insert(s);
        frontier = std::move(next);
    }
    for (const auto& sig : frontier)
        result.leaves[sig] = static_cumulative_loss(root, sig, importance);
    return result;
}

}  // namespace archtree::testing
