// Copyright (c) 2026 The archtree authors
// SPDX-License-Identifier: Apache-2.0

#include "search/search.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <numeric>
#include <thread>

#include "core/error.hpp"
#include "graph/prune.hpp"

namespace archtree {

using nlohmann::json;

LatencyGoal LatencyGoal::parse(const std::string& text) {
    LatencyGoal g;
    std::string number = text;
    if (text.size() > 2 && text.substr(text.size() - 2) == "ms") {
        g.relative = false;
        number = text.substr(0, text.size() - 2);
    } else {
        g.relative = true;
    }
    try {
        std::size_t used = 0;
        g.value = std::stod(number, &used);
        if (used != number.size()) throw std::invalid_argument(number);
    } catch (const std::exception&) {
        fail(ErrorCode::Argument, "cannot parse latency goal '" + text + "'");
    }
    if (g.value <= 0.0) fail(ErrorCode::Argument, "latency goal must be positive");
    return g;
}

std::string LatencyGoal::to_string() const {
    char buf[48];
    std::snprintf(buf, sizeof(buf), relative ? "%.6g" : "%.6gms", value);
    return buf;
}

void SearchConfig::validate() const {
    if (steps < 1) fail(ErrorCode::Argument, "steps must be at least 1");
    if (beam_width < 1) fail(ErrorCode::Argument, "beam width must be at least 1");
    if (goal.value <= 0.0) fail(ErrorCode::Argument, "latency goal must be positive");
    if (min_channels_per_group < 1)
        fail(ErrorCode::Argument, "min channels per group must be at least 1");
    if (workers < 1) fail(ErrorCode::Argument, "worker count must be at least 1");
    if (final_tune_batches < 0) fail(ErrorCode::Argument, "final tune batches must be >= 0");
    if (final_tune_lr <= 0.0) fail(ErrorCode::Argument, "final tune learning rate must be positive");
    if (policy.kind == StepPolicy::Kind::Fixed && policy.fixed_delta < 1)
        fail(ErrorCode::Argument, "fixed exploration step must be at least 1");
    train.validate();
    exploration_protocol.validate();
    final_protocol.validate();
}

json SearchConfig::to_json() const {
    return {{"steps", steps},
            {"beam_width", beam_width},
            {"goal", {{"value", goal.value}, {"relative", goal.relative}}},
            {"policy", policy.to_string()},
            {"early_stopping", early_stopping},
            {"reductions",
             {{"spatial", reduction_name(reductions.spatial)},
              {"neural", reduction_name(reductions.neural)},
              {"group", reduction_name(reductions.group)}}},
            {"train",
             {{"learning_rate", train.learning_rate},
              {"batch_size", train.batch_size},
              {"batches_per_step", train.batches_per_step}}},
            {"finetune", finetune},
            {"final_tune_batches", final_tune_batches},
            {"final_tune_lr", final_tune_lr},
            {"seed", seed},
            {"min_channels_per_group", min_channels_per_group},
            {"workers", workers},
            {"cumulative_loss_filter", cumulative_loss_filter},
            {"exploration_protocol", exploration_protocol.to_json()},
            {"final_protocol", final_protocol.to_json()}};
}

SearchConfig SearchConfig::from_json(const json& j) {
    static const std::set<std::string> known = {
        "steps",          "beam_width",       "goal",
        "policy",         "early_stopping",   "reductions",
        "train",          "finetune",         "final_tune_batches",
        "final_tune_lr",  "seed",             "min_channels_per_group",
        "workers",        "cumulative_loss_filter", "exploration_protocol",
        "final_protocol"};
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) fail(ErrorCode::Argument, "unknown search config key '" + key + "'");

    SearchConfig c;
    c.steps = j.value("steps", c.steps);
    c.beam_width = j.value("beam_width", c.beam_width);
    if (j.contains("goal")) {
        const auto& g = j.at("goal");
        if (g.is_string()) {
            c.goal = LatencyGoal::parse(g.get<std::string>());
        } else {
            c.goal.value = g.value("value", c.goal.value);
            c.goal.relative = g.value("relative", c.goal.relative);
        }
    }
    if (j.contains("policy")) c.policy = StepPolicy::parse(j.at("policy").get<std::string>());
    c.early_stopping = j.value("early_stopping", c.early_stopping);
    if (j.contains("reductions")) {
        const auto& r = j.at("reductions");
        c.reductions.spatial = reduction_from_name(r.value("spatial", "sum"));
        c.reductions.neural = reduction_from_name(r.value("neural", "linf"));
        c.reductions.group = reduction_from_name(r.value("group", "sum"));
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
        c.train.batch_size = t.value("batch_size", c.train.batch_size);
        c.train.batches_per_step = t.value("batches_per_step", c.train.batches_per_step);
    }
    c.finetune = j.value("finetune", c.finetune);
    c.final_tune_batches = j.value("final_tune_batches", c.final_tune_batches);
    c.final_tune_lr = j.value("final_tune_lr", c.final_tune_lr);
    c.seed = j.value("seed", c.seed);
    c.min_channels_per_group = j.value("min_channels_per_group", c.min_channels_per_group);
    c.workers = j.value("workers", c.workers);
    c.cumulative_loss_filter = j.value("cumulative_loss_filter", c.cumulative_loss_filter);
    if (j.contains("exploration_protocol"))
        c.exploration_protocol = BenchmarkProtocol::from_json(j.at("exploration_protocol"));
    if (j.contains("final_protocol"))
        c.final_protocol = BenchmarkProtocol::from_json(j.at("final_protocol"));
    c.validate();
    return c;
}

GroupImportance TrainingImportanceSource::gather(Node& node, const GroupSet& node_groups,
                                                 bool update_weights, std::uint64_t node_seed) {
    train_.validate();
    Rng rng(node_seed);
    ImportanceState state = ImportanceState::for_model(node.model);
    for (std::int64_t b = 0; b < train_.batches_per_step; ++b) {
        const Batch batch = dataset_.sample_batch(rng, train_.batch_size);
        auto [loss, grads] = loss_and_grads(node.model, batch);
        (void)loss;
        // Importance uses the weights the gradient was taken at, so it is
        // folded in before the SGD update.
        accumulate(state, node.model, grads);
        if (update_weights) sgd_step(node.model, grads, train_.learning_rate);
    }
    return compute_group_importance(node.model, node_groups, state, reductions_);
}

FixedImportanceSource FixedImportanceSource::from_state(const ModelGraph& root_model,
                                                        const ImportanceState& state,
                                                        const ReductionConfig& reductions) {
    const GroupSet groups = build_channel_groups(root_model);
    GroupImportance gi = compute_group_importance(root_model, groups, state, reductions);
    return FixedImportanceSource(std::move(gi.per_group));
}

GroupImportance FixedImportanceSource::gather(Node& node, const GroupSet& node_groups, bool,
                                              std::uint64_t) {
    if (node.kept_channels.size() != root_vectors_.size())
        fail(ErrorCode::Argument, "fixed importance has the wrong group count");
    GroupImportance out;
    out.per_group.resize(root_vectors_.size());
    for (std::size_t g = 0; g < root_vectors_.size(); ++g) {
        const auto& kept = node.kept_channels[g];
        auto& vec = out.per_group[g];
        vec.reserve(kept.size());
        for (auto root_idx : kept) {
            if (root_idx < 0 || root_idx >= static_cast<std::int64_t>(root_vectors_[g].size()))
                fail(ErrorCode::Argument, "kept channel outside the root importance vector");
            vec.push_back(root_vectors_[g][static_cast<std::size_t>(root_idx)]);
        }
        if (static_cast<std::int64_t>(vec.size()) !=
            node_groups[g].channel_count)
            fail(ErrorCode::Internal, "fixed importance slice does not match the node's groups");
    }
    return out;
}

double MeasureService::measure(const ModelGraph& model, const Signature& signature,
                               const BenchmarkProtocol& protocol) {
    {
        std::lock_guard lock(mutex_);
        ++queries_;
    }
    auto call = [&] {
        std::lock_guard lock(mutex_);  // the backend is exclusive
        ++provider_calls_;
        return provider_.measure_ms(model, signature, protocol);
    };
    if (cache_) return cache_->get_or_measure(signature, call);
    return call();
}

std::int64_t MeasureService::provider_calls() const {
    std::lock_guard lock(mutex_);
    return provider_calls_;
}

std::int64_t MeasureService::queries() const {
    std::lock_guard lock(mutex_);
    return queries_;
}

CacheStats MeasureService::cache_stats() const {
    return cache_ ? cache_->stats() : CacheStats{};
}

BlossomResult blossom(const Node& parent, const GroupImportance& importance, int group_index,
                      double tau_step, const StepPolicy& policy, std::int64_t min_channels,
                      MeasureService& measure, const BenchmarkProtocol& protocol,
                      std::optional<double> loss_threshold) {
    BlossomResult result;
    const auto g = static_cast<std::size_t>(group_index);
    std::int64_t current = parent.signature.counts[g];
    if (current <= min_channels) return result;  // nothing left to remove

    ModelGraph model = parent.model;
    std::vector<double> channel_importance = importance.per_group[g];
    auto kept = parent.kept_channels;
    Signature signature = parent.signature;
    double running_loss = 0.0;

    for (;;) {
        const std::int64_t stride = exploration_step(current, policy);
        const std::int64_t remove = std::min(stride, current - min_channels);
        const auto selected = select_channels(channel_importance, remove);
        running_loss += importance_loss(channel_importance, selected);

        // Strictly above the threshold the child provably cannot be kept, so
        // the remaining latency probes would be wasted.
        if (loss_threshold && running_loss > *loss_threshold) {
            result.status = BlossomStatus::EarlyStopped;
            result.probes = 0;
            return result;
        }

        const GroupSet groups_now = build_channel_groups(model);
        model = apply_pruning(model, groups_now, group_index, selected);
        for (auto it = selected.rbegin(); it != selected.rend(); ++it) {
            channel_importance.erase(channel_importance.begin() + *it);
            kept[g].erase(kept[g].begin() + *it);
        }
        current -= remove;
        signature.counts[g] = current;

        const double ms = measure.measure(model, signature, protocol);
        ++result.probes;
        if (ms <= tau_step) {
            result.status = BlossomStatus::Child;
            result.model = std::move(model);
            result.signature = std::move(signature);
            result.step_loss = running_loss;
            result.latency_ms = ms;
            result.kept_channels = std::move(kept);
            return result;
        }
        if (current <= min_channels) {
            result.status = BlossomStatus::NoChild;  // exhausted above the goal
            return result;
        }
    }
}

namespace {

std::uint64_t node_phase_seed(std::uint64_t run_seed, int node_id, int phase) {
    return mix_seed(mix_seed(run_seed, 0x9E1DULL + static_cast<std::uint64_t>(phase)),
                    static_cast<std::uint64_t>(node_id));
}

template <typename Fn>
void parallel_for(int workers, std::size_t n, Fn&& fn) {
    const auto pool_size = static_cast<std::size_t>(workers) < n
                               ? static_cast<std::size_t>(workers)
                               : n;
    if (pool_size <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(pool_size);
    for (std::size_t w = 0; w < pool_size; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

struct Candidate {
    ModelGraph model;
    Signature signature;
    double step_loss = 0.0;
    double cumulative_loss = 0.0;
    double latency_ms = 0.0;
    std::vector<std::vector<std::int64_t>> kept_channels;
    int parent_id = 0;
};

json signature_json(const Signature& s) { return json(s.counts); }

}  // namespace

RunResult run_search(const ModelGraph& root_model, const SearchConfig& config,
                     SearchServices& services) {
    config.validate();
    {
        const auto violations = validate_graph(root_model);
        if (!violations.empty())
            fail(ErrorCode::Validation, "root model is invalid: " + violations.front().message +
                                            " (layer '" + violations.front().layer_id + "')");
    }
    const GroupSet root_groups = build_channel_groups(root_model);
    const Signature root_signature = root_groups.signature();

    MeasureService measure(services.provider, services.cache);
    const double tau_root = measure.measure(root_model, root_signature, config.final_protocol);
    const double tau_goal =
        config.goal.relative ? config.goal.value * tau_root : config.goal.value;

    const double root_accuracy =
        services.dataset ? evaluate(root_model, *services.dataset, Split::Validation) : -1.0;

    RunResult result;
    result.tau_root = tau_root;
    result.tau_goal = tau_goal;

    json report;
    report["config"] = config.to_json();
    report["goal_ms"] = tau_goal;
    report["importance_batches_per_step"] = services.importance.batches_per_gather();
    report["root"] = {{"signature", signature_json(root_signature)},
                      {"latency_ms", tau_root},
                      {"accuracy", root_accuracy},
                      {"param_count", root_model.parameter_count()}};

    auto finish_report = [&](json& rep) {
        const CacheStats cs = measure.cache_stats();
        rep["cache"] = {{"hits", cs.hits}, {"misses", cs.misses}, {"hit_rate", cs.hit_rate()}};
        rep["provider_calls"] = measure.provider_calls();
        rep["latency_queries"] = measure.queries();
    };

    if (!(tau_goal < tau_root)) {
        // Nothing to prune: the goal already holds at the root.
        result.goal_clamped = true;
        ResultBundle bundle;
        bundle.node_id = 0;
        bundle.signature = root_signature;
        bundle.model = root_model;
        bundle.latency_ms = tau_root;
        bundle.accuracy = root_accuracy;
        bundle.param_count = root_model.parameter_count();
        result.bundles.push_back(std::move(bundle));
        report["warning"] = "latency goal " + std::to_string(tau_goal) +
                            " ms is not below the root latency " + std::to_string(tau_root) +
                            " ms; returning the root model unchanged";
        report["steps"] = json::array();
        report["results"] = json::array(
            {{{"node_id", 0},
              {"signature", signature_json(root_signature)},
              {"latency_ms", tau_root},
              {"accuracy", root_accuracy},
              {"param_count", root_model.parameter_count()},
              {"cumulative_loss", 0.0}}});
        finish_report(report);
        result.report = std::move(report);
        return result;
    }

    Tree tree;
    {
        Node root;
        root.id = 0;
        root.signature = root_signature;
        root.model = root_model;
        root.latency_ms = tau_root;
        root.kept_channels.resize(root_groups.size());
        for (std::size_t g = 0; g < root_groups.size(); ++g) {
            root.kept_channels[g].resize(static_cast<std::size_t>(root_groups[g].channel_count));
            std::iota(root.kept_channels[g].begin(), root.kept_channels[g].end(), 0);
        }
        tree.nodes.push_back(std::move(root));
        tree.registry.insert(root_signature);
        tree.alive = {0};
    }

    json steps_json = json::array();
    for (int step = 1; step <= config.steps; ++step) {
        const double tau_step = latency_schedule(tau_root, tau_goal, config.steps, step);
        const std::int64_t calls_before = measure.provider_calls();
        const CacheStats cache_before = measure.cache_stats();

        // Train phase: fine-tune every alive node and gather importances;
        // independent per node, so it parallelizes across workers. The root
        // only backpropagates, its weights need no recovery.
        const std::vector<int> parents = tree.alive;
        std::vector<GroupImportance> importances(parents.size());
        parallel_for(config.workers, parents.size(), [&](std::size_t i) {
            Node& node = tree.nodes[static_cast<std::size_t>(parents[i])];
            const GroupSet node_groups = build_channel_groups(node.model);
            const bool update = config.finetune && node.id != 0;
            importances[i] = services.importance.gather(
                node, node_groups, update, node_phase_seed(config.seed, node.id, 0));
        });

        // Blossom phase: one candidate per (parent, prunable group), pruned
        // until it meets the step goal. The coordinator runs this serially;
        // all probes go through the one measurement queue.
        std::vector<Candidate> candidates;
        std::map<Signature, std::size_t> by_signature;
        std::int64_t early_stops = 0;
        std::int64_t dropped_unique = 0;

        auto candidate_key = [&](const Candidate& c) {
            return config.cumulative_loss_filter ? c.cumulative_loss : c.step_loss;
        };
        auto arm_threshold = [&]() -> std::optional<double> {
            if (!config.early_stopping) return std::nullopt;
            if (candidates.size() < static_cast<std::size_t>(config.beam_width))
                return std::nullopt;
            std::vector<double> keys;
            keys.reserve(candidates.size());
            for (const auto& c : candidates) keys.push_back(candidate_key(c));
            std::nth_element(keys.begin(), keys.begin() + (config.beam_width - 1), keys.end());
            return keys[static_cast<std::size_t>(config.beam_width - 1)];
        };

        for (const int parent_id : parents) {
            Node& parent = tree.nodes[static_cast<std::size_t>(parent_id)];
            const std::size_t importance_idx = static_cast<std::size_t>(
                std::find(parents.begin(), parents.end(), parent_id) - parents.begin());
            const GroupImportance& gi = importances[importance_idx];

            for (std::size_t g = 0; g < root_groups.size(); ++g) {
                if (!root_groups[g].prunable) continue;
                std::optional<double> threshold = arm_threshold();
                if (threshold && config.cumulative_loss_filter)
                    *threshold -= parent.cumulative_loss;

                BlossomResult br = blossom(parent, gi, static_cast<int>(g), tau_step,
                                           config.policy, config.min_channels_per_group, measure,
                                           config.exploration_protocol, threshold);
                if (br.status == BlossomStatus::EarlyStopped) {
                    ++early_stops;
                    continue;
                }
                if (br.status == BlossomStatus::NoChild) continue;

                if (tree.registry.count(br.signature)) {
                    ++dropped_unique;  // an identical node already lives in the tree
                    continue;
                }
                Candidate cand;
                cand.model = std::move(br.model);
                cand.signature = std::move(br.signature);
                cand.step_loss = br.step_loss;
                cand.cumulative_loss = parent.cumulative_loss + br.step_loss;
                cand.latency_ms = br.latency_ms;
                cand.kept_channels = std::move(br.kept_channels);
                cand.parent_id = parent_id;

                auto it = by_signature.find(cand.signature);
                if (it != by_signature.end()) {
                    // Two parents landed on the same architecture this step;
                    // keep the lower-loss lineage.
                    ++dropped_unique;
                    if (candidate_key(cand) < candidate_key(candidates[it->second]))
                        candidates[it->second] = std::move(cand);
                    continue;
                }
                by_signature.emplace(cand.signature, candidates.size());
                candidates.push_back(std::move(cand));
            }
            parent.alive = false;  // a node is never alive in two consecutive steps
        }

        if (candidates.empty())
            fail(ErrorCode::Infeasible,
                 "infeasible latency goal at step " + std::to_string(step), step);

        // Importance filter: keep the beam_width children with minimal loss;
        // ties break toward the lexicographically smaller signature.
        std::vector<std::size_t> order(candidates.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const double ka = candidate_key(candidates[a]);
            const double kb = candidate_key(candidates[b]);
            if (ka != kb) return ka < kb;
            return candidates[a].signature < candidates[b].signature;
        });

        const std::size_t keep =
            std::min<std::size_t>(static_cast<std::size_t>(config.beam_width), order.size());
        std::vector<int> new_alive;
        json alive_json = json::array();
        for (std::size_t k = 0; k < keep; ++k) {
            Candidate& cand = candidates[order[k]];
            Node node;
            node.id = static_cast<int>(tree.nodes.size());
            node.signature = cand.signature;
            node.model = std::move(cand.model);
            node.parent = cand.parent_id;
            node.step_created = step;
            node.step_loss = cand.step_loss;
            node.cumulative_loss = cand.cumulative_loss;
            node.latency_ms = cand.latency_ms;
            node.kept_channels = std::move(cand.kept_channels);
            tree.registry.insert(node.signature);
            new_alive.push_back(node.id);
            alive_json.push_back({{"node_id", node.id},
                                  {"parent", *node.parent},
                                  {"signature", signature_json(node.signature)},
                                  {"step_loss", node.step_loss},
                                  {"cumulative_loss", node.cumulative_loss},
                                  {"latency_ms", node.latency_ms}});
            tree.nodes.push_back(std::move(node));
        }
        tree.alive = std::move(new_alive);

        const CacheStats cache_after = measure.cache_stats();
        steps_json.push_back(
            {{"index", step},
             {"tau_ms", tau_step},
             {"alive", alive_json},
             {"candidates", candidates.size()},
             {"dropped_unique", dropped_unique},
             {"early_stops", early_stops},
             {"benchmarks", measure.provider_calls() - calls_before},
             {"cache",
              {{"hits", cache_after.hits - cache_before.hits},
               {"misses", cache_after.misses - cache_before.misses}}}});
    }
    report["steps"] = std::move(steps_json);

    // Final fine-tuning of each survivor, then the final-grade benchmark.
    parallel_for(config.workers, tree.alive.size(), [&](std::size_t i) {
        Node& node = tree.nodes[static_cast<std::size_t>(tree.alive[i])];
        if (!config.finetune || !services.dataset || config.final_tune_batches == 0) return;
        Rng rng(node_phase_seed(config.seed, node.id, 1));
        for (std::int64_t b = 0; b < config.final_tune_batches; ++b) {
            const Batch batch = services.dataset->sample_batch(rng, config.train.batch_size);
            auto [loss, grads] = loss_and_grads(node.model, batch);
            (void)loss;
            sgd_step(node.model, grads, config.final_tune_lr);
        }
    });

    for (const int id : tree.alive) {
        Node& node = tree.nodes[static_cast<std::size_t>(id)];
        ResultBundle bundle;
        bundle.node_id = node.id;
        bundle.signature = node.signature;
        bundle.accuracy =
            services.dataset ? evaluate(node.model, *services.dataset, Split::Validation) : -1.0;
        bundle.latency_ms = measure.measure(node.model, node.signature, config.final_protocol);
        bundle.param_count = node.model.parameter_count();
        bundle.cumulative_loss = node.cumulative_loss;
        bundle.model = node.model;
        result.bundles.push_back(std::move(bundle));
    }
    std::sort(result.bundles.begin(), result.bundles.end(),
              [](const ResultBundle& a, const ResultBundle& b) {
                  if (a.accuracy != b.accuracy) return a.accuracy > b.accuracy;
                  if (a.cumulative_loss != b.cumulative_loss)
                      return a.cumulative_loss < b.cumulative_loss;
                  return a.node_id < b.node_id;
              });

    json results_json = json::array();
    for (const auto& b : result.bundles)
        results_json.push_back({{"node_id", b.node_id},
                                {"signature", signature_json(b.signature)},
                                {"latency_ms", b.latency_ms},
                                {"accuracy", b.accuracy},
                                {"param_count", b.param_count},
                                {"cumulative_loss", b.cumulative_loss}});
    report["results"] = std::move(results_json);
    finish_report(report);
    result.report = std::move(report);
    return result;
}

}  // namespace archtree
