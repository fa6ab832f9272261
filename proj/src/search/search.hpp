// Copyright (c) 2026 The archtree authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <vector>

#include <nlohmann/json.hpp>

#include "cache/cache.hpp"
#include "exec/dataset.hpp"
#include "exec/executor.hpp"
#include "graph/groups.hpp"
#include "graph/model.hpp"
#include "importance/importance.hpp"
#include "latency/provider.hpp"
#include "search/schedule.hpp"

namespace archtree {

/// One candidate pruned sub-model in the tree.
struct Node {
    int id = 0;
    Signature signature;
    ModelGraph model;
    std::optional<int> parent;
    int step_created = 0;
    double step_loss = 0.0;        // importance lost relative to the parent
    double cumulative_loss = 0.0;  // summed along the path from the root
    bool alive = true;
    double latency_ms = 0.0;  // cached measurement taken at creation
    /// Surviving root-relative channel indices, per group, sorted.
    std::vector<std::vector<std::int64_t>> kept_channels;
};

/// The tree of all candidates kept so far. The signature registry holds every
/// node ever created, alive or deactivated, and enforces uniqueness.
struct Tree {
    std::vector<Node> nodes;  // indexed by node id
    std::vector<int> alive;   // ids, in filter order
    std::set<Signature> registry;
};

struct LatencyGoal {
    double value = 0.5;
    bool relative = true;  // fraction of the measured root latency

    /// "0.5" => relative fraction, "12ms" => absolute milliseconds.
    static LatencyGoal parse(const std::string& text);
    std::string to_string() const;
};

struct SearchConfig {
    int steps = 5;
    int beam_width = 3;  // alive nodes kept per step
    LatencyGoal goal;
    StepPolicy policy;
    bool early_stopping = true;
    ReductionConfig reductions;
    TrainConfig train;
    bool finetune = true;  // weight updates during and after the search
    std::int64_t final_tune_batches = 128;
    double final_tune_lr = 0.01;
    std::uint64_t seed = 0;
    std::int64_t min_channels_per_group = 1;
    int workers = 1;
    /// Rank children by cumulative path loss instead of per-step loss.
    /// Non-default; the step filter compares each child to its own parent.
    bool cumulative_loss_filter = false;
    BenchmarkProtocol exploration_protocol = BenchmarkProtocol::exploration();
    BenchmarkProtocol final_protocol = BenchmarkProtocol::final_grade();

    void validate() const;
    nlohmann::json to_json() const;
    static SearchConfig from_json(const nlohmann::json& j);
};

/// Where per-step channel importance comes from.
class ImportanceSource {
public:
    virtual ~ImportanceSource() = default;

    /// Per-group importance for the node's current model. May fine-tune
    /// node.model in place when update_weights is set; the root node is
    /// always gathered without updates.
    virtual GroupImportance gather(Node& node, const GroupSet& node_groups, bool update_weights,
                                   std::uint64_t node_seed) = 0;

    /// Batches folded into the last gather, echoed in run reports.
    virtual std::int64_t batches_per_gather() const = 0;
};

/// Backpropagation-driven importance entwined with fine-tuning.
class TrainingImportanceSource : public ImportanceSource {
public:
    TrainingImportanceSource(const Dataset& dataset, TrainConfig train, ReductionConfig reductions)
        : dataset_(dataset), train_(train), reductions_(reductions) {}

    GroupImportance gather(Node& node, const GroupSet& node_groups, bool update_weights,
                           std::uint64_t node_seed) override;
    std::int64_t batches_per_gather() const override { return train_.batches_per_step; }

private:
    const Dataset& dataset_;
    TrainConfig train_;
    ReductionConfig reductions_;
};

/// Static per-group importance over root-model channels; each node sees the
/// root vectors sliced down to its surviving channels. Backs externally
/// computed importance files and the enumeration test harness.
class FixedImportanceSource : public ImportanceSource {
public:
    explicit FixedImportanceSource(std::vector<std::vector<double>> root_vectors)
        : root_vectors_(std::move(root_vectors)) {}

    /// Reduces a per-layer importance state (e.g. loaded from a file) over
    /// the root model's groups.
    static FixedImportanceSource from_state(const ModelGraph& root_model,
                                            const ImportanceState& state,
                                            const ReductionConfig& reductions);

    GroupImportance gather(Node& node, const GroupSet& node_groups, bool update_weights,
                           std::uint64_t node_seed) override;
    std::int64_t batches_per_gather() const override { return 0; }

private:
    std::vector<std::vector<double>> root_vectors_;
};

/// Serializes provider access and optionally memoizes through a cache; all
/// search measurements funnel through one of these.
class MeasureService {
public:
    MeasureService(LatencyProvider& provider, LatencyCache* cache)
        : provider_(provider), cache_(cache) {}

    double measure(const ModelGraph& model, const Signature& signature,
                   const BenchmarkProtocol& protocol);

    std::int64_t provider_calls() const;
    std::int64_t queries() const;
    CacheStats cache_stats() const;

private:
    LatencyProvider& provider_;
    LatencyCache* cache_;
    mutable std::mutex mutex_;
    std::int64_t provider_calls_ = 0;
    std::int64_t queries_ = 0;
};

struct SearchServices {
    LatencyProvider& provider;
    ImportanceSource& importance;
    LatencyCache* cache = nullptr;    // optional persistent memo
    const Dataset* dataset = nullptr; // evaluation + final fine-tuning
};

enum class BlossomStatus { Child, NoChild, EarlyStopped };

struct BlossomResult {
    BlossomStatus status = BlossomStatus::NoChild;
    ModelGraph model;
    Signature signature;
    double step_loss = 0.0;
    double latency_ms = 0.0;
    std::vector<std::vector<std::int64_t>> kept_channels;
    std::int64_t probes = 0;  // latency queries issued for this generation
};

/// Strips channels from one group of the parent model, stride by stride,
/// until the latency goal is met (Child), the group bottoms out above the
/// goal (NoChild), or the running importance loss proves the child cannot be
/// kept (EarlyStopped). `loss_threshold`, when armed, is compared against the
/// running per-step loss; crossing strictly above it discards the child.
BlossomResult blossom(const Node& parent, const GroupImportance& importance, int group_index,
                      double tau_step, const StepPolicy& policy, std::int64_t min_channels,
                      MeasureService& measure, const BenchmarkProtocol& protocol,
                      std::optional<double> loss_threshold);

struct ResultBundle {
    int node_id = 0;
    Signature signature;
    ModelGraph model;
    double latency_ms = 0.0;
    double accuracy = -1.0;  // -1 when no dataset was supplied
    std::int64_t param_count = 0;
    double cumulative_loss = 0.0;
};

struct RunResult {
    std::vector<ResultBundle> bundles;  // sorted by validation accuracy, best first
    nlohmann::json report;
    bool goal_clamped = false;  // goal was not below the root latency
    double tau_root = 0.0;
    double tau_goal = 0.0;
};

/// The full pruning run: measure the root, schedule s latency goals, blossom
/// and filter a beam of A candidates per step, then fine-tune and benchmark
/// the survivors. Deterministic for a fixed seed at any worker count.
RunResult run_search(const ModelGraph& root_model, const SearchConfig& config,
                     SearchServices& services);

}  // namespace archtree
