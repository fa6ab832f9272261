// Copyright (c) 2026 The archtree authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Everything here goes through the public C API in
// archtree/archtree.h; the C++ core is not linked directly.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "archtree/archtree.h"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Exit codes are a stable contract: 0 success, 2 input error,
// 3 infeasible latency goal, 4 provider failure.
int exit_code_for(at_status status) {
    switch (status) {
        case AT_OK: return 0;
        case AT_ERR_INFEASIBLE: return 3;
        case AT_ERR_PROVIDER:
        case AT_ERR_UNMEASURED:
        case AT_ERR_TIMEOUT: return 4;
        case AT_ERR_INTERNAL: return 1;
        default: return 2;
    }
}

struct CliFailure {
    int code;
    std::string message;
};

[[noreturn]] void bail(int code, const std::string& message) { throw CliFailure{code, message}; }

[[noreturn]] void bail(at_status status, const std::string& context) {
    bail(exit_code_for(status), context + ": " + at_last_error());
}

std::string take_string(char* owned) {
    std::string out = owned ? owned : "";
    at_string_free(owned);
    return out;
}

struct ModelHandle {
    at_model* ptr = nullptr;
    ~ModelHandle() { at_model_free(ptr); }
};

struct GroupsHandle {
    at_groups* ptr = nullptr;
    ~GroupsHandle() { at_groups_free(ptr); }
};

struct ProviderHandle {
    at_provider* ptr = nullptr;
    ~ProviderHandle() { at_provider_free(ptr); }
};

struct CacheHandle {
    at_cache* ptr = nullptr;
    ~CacheHandle() { at_cache_free(ptr); }
};

struct RunHandle {
    at_run_result* ptr = nullptr;
    ~RunHandle() { at_run_result_free(ptr); }
};

void load_model_checked(const std::string& model_path, const std::string& weights_path,
                        ModelHandle& model) {
    if (!fs::exists(model_path)) bail(2, "model file '" + model_path + "' does not exist");
    const at_status status = at_model_load(
        model_path.c_str(), weights_path.empty() ? nullptr : weights_path.c_str(), &model.ptr);
    if (status != AT_OK) bail(status, "cannot load model '" + model_path + "'");

    char* violations_raw = nullptr;
    if (at_model_validate(model.ptr, &violations_raw) != AT_OK)
        bail(2, std::string("validation failed: ") + at_last_error());
    const json violations = json::parse(take_string(violations_raw));
    if (!violations.empty()) {
        std::fprintf(stderr, "model '%s' is invalid:\n", model_path.c_str());
        for (const auto& v : violations)
            std::fprintf(stderr, "  [%s] %s\n", v.value("layer", "").c_str(),
                         v.value("message", "").c_str());
        bail(2, "model validation failed");
    }
}

json provider_spec_from_flag(const std::string& flag) {
    if (flag == "analytical") return {{"kind", "analytical"}};
    if (flag.rfind("analytical:", 0) == 0) {
        const std::string path = flag.substr(std::string("analytical:").size());
        std::ifstream in(path);
        if (!in) bail(2, "cannot open analytical params '" + path + "'");
        return {{"kind", "analytical"}, {"params", json::parse(in)}};
    }
    if (flag.rfind("replay:", 0) == 0)
        return {{"kind", "replay"}, {"path", flag.substr(std::string("replay:").size())}};
    if (flag.rfind("command:", 0) == 0)
        return {{"kind", "command"}, {"template", flag.substr(std::string("command:").size())}};
    bail(2, "cannot parse --provider '" + flag +
                "' (expected analytical, analytical:<params.json>, replay:<file> or "
                "command:<template>)");
}

json dataset_spec_from_flag(const std::string& flag) {
    if (flag.rfind("blobs", 0) == 0) {
        json spec = {{"kind", "blobs"}};
        std::vector<long long> parts;
        std::string rest = flag.size() > 5 ? flag.substr(6) : "";
        std::stringstream ss(rest);
        std::string tok;
        while (std::getline(ss, tok, ':')) {
            try {
                parts.push_back(std::stoll(tok));
            } catch (const std::exception&) {
                bail(2, "cannot parse --dataset '" + flag + "'");
            }
        }
        if (parts.size() > 0) spec["features"] = parts[0];
        if (parts.size() > 1) spec["classes"] = parts[1];
        if (parts.size() > 2) spec["samples"] = parts[2];
        return spec;
    }
    if (flag.rfind("csv:", 0) == 0) {
        const std::string rest = flag.substr(4);
        const auto colon = rest.find_last_of(':');
        if (colon == std::string::npos || colon == 0 || colon + 1 >= rest.size())
            bail(2, "expected --dataset csv:<path>:<label_column>");
        return {{"kind", "csv"},
                {"path", rest.substr(0, colon)},
                {"label_column", rest.substr(colon + 1)}};
    }
    bail(2, "cannot parse --dataset '" + flag +
                "' (expected blobs[:features[:classes[:samples]]] or csv:<path>:<label>)");
}

json parse_goal(const std::string& text) {
    std::string number = text;
    bool relative = true;
    if (text.size() > 2 && text.substr(text.size() - 2) == "ms") {
        relative = false;
        number = text.substr(0, text.size() - 2);
    }
    try {
        std::size_t used = 0;
        const double value = std::stod(number, &used);
        if (used != number.size() || value <= 0.0) throw std::invalid_argument(number);
        return {{"value", value}, {"relative", relative}};
    } catch (const std::exception&) {
        bail(2, "cannot parse --goal '" + text + "' (use a fraction like 0.5 or '12ms')");
    }
}

// ---- prune ---------------------------------------------------------------

struct PruneOptions {
    std::string manifest_path;
    std::string model, weights, goal, provider, cache, out, delta, dataset;
    std::optional<long long> steps, alive, seed, workers;
    bool no_early_stop = false;
    bool no_finetune = false;
};

const std::vector<std::string> kManifestKeys = {
    "model",     "weights",   "provider",        "cache",
    "out",       "dataset",   "importance",      "goal",
    "steps",     "alive",     "delta",           "early_stopping",
    "finetune",  "seed",      "workers",         "reductions",
    "train",     "final_tune_batches", "final_tune_lr", "cumulative_loss_filter",
    "exploration_protocol", "final_protocol",    "min_channels_per_group"};

json load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) bail(2, "cannot open manifest '" + path + "'");
    json manifest;
    try {
        manifest = json::parse(in);
    } catch (const json::exception& e) {
        bail(2, "manifest '" + path + "' is not valid JSON: " + std::string(e.what()));
    }
    for (const auto& [key, value] : manifest.items()) {
        if (std::find(kManifestKeys.begin(), kManifestKeys.end(), key) == kManifestKeys.end())
            bail(2, "manifest '" + path + "' has unknown key '" + key + "'");
    }
    return manifest;
}

int cmd_prune(const PruneOptions& opt) {
    json manifest = json::object();
    if (!opt.manifest_path.empty()) manifest = load_manifest(opt.manifest_path);

    // Command-line flags override manifest fields.
    if (!opt.model.empty()) manifest["model"] = opt.model;
    if (!opt.weights.empty()) manifest["weights"] = opt.weights;
    if (!opt.goal.empty()) manifest["goal"] = opt.goal;
    if (!opt.provider.empty()) manifest["provider"] = provider_spec_from_flag(opt.provider);
    if (!opt.cache.empty()) manifest["cache"] = opt.cache;
    if (!opt.out.empty()) manifest["out"] = opt.out;
    if (!opt.delta.empty()) manifest["delta"] = opt.delta;
    if (!opt.dataset.empty()) manifest["dataset"] = dataset_spec_from_flag(opt.dataset);
    if (opt.steps) manifest["steps"] = *opt.steps;
    if (opt.alive) manifest["alive"] = *opt.alive;
    if (opt.seed) manifest["seed"] = *opt.seed;
    if (opt.workers) manifest["workers"] = *opt.workers;
    if (opt.no_early_stop) manifest["early_stopping"] = false;
    if (opt.no_finetune) manifest["finetune"] = false;

    if (!manifest.contains("model")) bail(2, "prune needs --model or a manifest with one");
    const std::string model_path = manifest.at("model").get<std::string>();
    const std::string weights_path = manifest.value("weights", std::string{});
    if (!weights_path.empty() && !fs::exists(weights_path))
        bail(2, "weights file '" + weights_path + "' does not exist");
    if (manifest.contains("dataset") && manifest.at("dataset").value("kind", "") == "csv") {
        const auto path = manifest.at("dataset").value("path", std::string{});
        if (!fs::exists(path)) bail(2, "dataset file '" + path + "' does not exist");
    }
    if (manifest.contains("importance")) {
        const auto path = manifest.at("importance").value("manifest", std::string{});
        if (!fs::exists(path)) bail(2, "importance file '" + path + "' does not exist");
    }

    ModelHandle model;
    load_model_checked(model_path, weights_path, model);

    const json provider_spec = manifest.value("provider", json{{"kind", "analytical"}});
    ProviderHandle provider;
    if (at_provider_create(provider_spec.dump().c_str(), &provider.ptr) != AT_OK)
        bail(2, std::string("cannot create provider: ") + at_last_error());

    CacheHandle cache;
    const std::string cache_path = manifest.value("cache", std::string{});
    if (!cache_path.empty()) {
        char* hex_raw = nullptr;
        if (at_fingerprint(model.ptr, provider_spec.dump().c_str(), &hex_raw) != AT_OK)
            bail(2, std::string("cannot fingerprint: ") + at_last_error());
        const std::string hex = take_string(hex_raw);
        const at_status status = at_cache_open(cache_path.c_str(), hex.c_str(), &cache.ptr);
        if (status != AT_OK) bail(status, "cannot open cache '" + cache_path + "'");
    }

    // Translate manifest naming to the engine config.
    json config = json::object();
    if (manifest.contains("goal")) {
        const auto& g = manifest.at("goal");
        config["goal"] = g.is_string() ? parse_goal(g.get<std::string>()) : g;
    }
    if (manifest.contains("steps")) config["steps"] = manifest.at("steps");
    if (manifest.contains("alive")) config["beam_width"] = manifest.at("alive");
    if (manifest.contains("delta")) config["policy"] = manifest.at("delta");
    for (const char* key :
         {"early_stopping", "finetune", "seed", "workers", "reductions", "train",
          "final_tune_batches", "final_tune_lr", "cumulative_loss_filter",
          "exploration_protocol", "final_protocol", "min_channels_per_group", "dataset",
          "importance"})
        if (manifest.contains(key)) config[key] = manifest.at(key);

    RunHandle run;
    const at_status status =
        at_search_run(model.ptr, config.dump().c_str(), provider.ptr, cache.ptr, &run.ptr);
    if (status != AT_OK) bail(status, "prune run failed");

    char* report_raw = nullptr;
    if (at_run_result_report(run.ptr, &report_raw) != AT_OK)
        bail(1, std::string("cannot read report: ") + at_last_error());
    const std::string report_text = take_string(report_raw);
    const json report = json::parse(report_text);

    const std::string out_dir = manifest.value("out", std::string("."));
    fs::create_directories(out_dir);
    {
        std::ofstream out(out_dir + "/report.json");
        out << report_text << "\n";
    }

    size_t count = 0;
    at_run_result_count(run.ptr, &count);
    for (size_t i = 0; i < count; ++i) {
        ModelHandle pruned;
        if (at_run_result_model(run.ptr, i, &pruned.ptr) != AT_OK)
            bail(1, std::string("cannot read result model: ") + at_last_error());
        const std::string stem = out_dir + "/model_" + std::to_string(i + 1);
        if (at_model_save(pruned.ptr, (stem + ".json").c_str(), (stem + ".bin").c_str()) != AT_OK)
            bail(2, std::string("cannot save result model: ") + at_last_error());
    }

    if (report.contains("warning"))
        std::printf("warning: %s\n", report.at("warning").get<std::string>().c_str());
    std::printf("root latency: %.6g ms, goal: %.6g ms\n",
                report.at("root").at("latency_ms").get<double>(),
                report.at("goal_ms").get<double>());
    std::printf("%-4s %-24s %12s %10s %10s\n", "rank", "signature", "latency_ms", "accuracy",
                "params");
    int rank = 1;
    for (const auto& r : report.at("results")) {
        std::string sig = r.at("signature").dump();
        const double acc = r.at("accuracy").get<double>();
        std::printf("%-4d %-24s %12.6g %10s %10lld\n", rank++, sig.c_str(),
                    r.at("latency_ms").get<double>(),
                    acc < 0 ? "n/a" : std::to_string(acc).substr(0, 6).c_str(),
                    r.at("param_count").get<long long>());
    }
    const auto& cache_stats = report.at("cache");
    std::printf("cache: %lld hits / %lld misses (hit rate %.4g), %lld provider calls\n",
                cache_stats.at("hits").get<long long>(),
                cache_stats.at("misses").get<long long>(),
                cache_stats.at("hit_rate").get<double>(),
                report.at("provider_calls").get<long long>());
    std::printf("artifacts written to %s\n", out_dir.c_str());
    return 0;
}

// ---- analyze ---------------------------------------------------------------

int cmd_analyze(const std::string& model_path, const std::string& weights_path) {
    ModelHandle model;
    load_model_checked(model_path, weights_path, model);

    GroupsHandle groups;
    if (at_groups_build(model.ptr, &groups.ptr) != AT_OK)
        bail(2, std::string("cannot build channel groups: ") + at_last_error());
    char* raw = nullptr;
    if (at_groups_describe(groups.ptr, &raw) != AT_OK)
        bail(1, std::string("cannot describe groups: ") + at_last_error());
    const json desc = json::parse(take_string(raw));

    std::printf("%-6s %-9s %-9s %s\n", "group", "channels", "prunable", "members");
    for (const auto& g : desc) {
        std::string members;
        for (const auto& m : g.at("members")) {
            if (!members.empty()) members += " ";
            members += m.at("layer").get<std::string>() + ":" + m.at("port").get<std::string>();
        }
        std::printf("%-6lld %-9lld %-9s %s\n", g.at("index").get<long long>(),
                    g.at("channels").get<long long>(),
                    g.at("prunable").get<bool>() ? "yes" : "no", members.c_str());
    }
    return 0;
}

// ---- curve -----------------------------------------------------------------

int cmd_curve(const std::string& model_path, const std::string& weights_path, int group,
              const std::string& provider_flag, const std::string& cache_path,
              const std::string& out_path) {
    ModelHandle model;
    load_model_checked(model_path, weights_path, model);

    const json provider_spec = provider_spec_from_flag(provider_flag);
    ProviderHandle provider;
    if (at_provider_create(provider_spec.dump().c_str(), &provider.ptr) != AT_OK)
        bail(2, std::string("cannot create provider: ") + at_last_error());

    CacheHandle cache;
    if (!cache_path.empty()) {
        char* hex_raw = nullptr;
        if (at_fingerprint(model.ptr, provider_spec.dump().c_str(), &hex_raw) != AT_OK)
            bail(2, std::string("cannot fingerprint: ") + at_last_error());
        const std::string hex = take_string(hex_raw);
        const at_status status = at_cache_open(cache_path.c_str(), hex.c_str(), &cache.ptr);
        if (status != AT_OK) bail(status, "cannot open cache '" + cache_path + "'");
    }

    char* csv_raw = nullptr;
    const at_status status = at_curve_csv(model.ptr, group, provider.ptr, cache.ptr, &csv_raw);
    if (status != AT_OK) bail(status, "curve sweep failed");
    const std::string csv = take_string(csv_raw);

    if (out_path.empty()) {
        std::fputs(csv.c_str(), stdout);
    } else {
        std::ofstream out(out_path);
        if (!out) bail(2, "cannot write '" + out_path + "'");
        out << csv;
        std::printf("curve written to %s\n", out_path.c_str());
    }
    return 0;
}

// ---- cache stats -------------------------------------------------------------

int cmd_cache_stats(const std::string& cache_path) {
    if (!fs::exists(cache_path)) bail(2, "cache file '" + cache_path + "' does not exist");
    char* stats_raw = nullptr;
    char* timeline_raw = nullptr;
    const at_status status = at_cache_inspect(cache_path.c_str(), &stats_raw, &timeline_raw);
    if (status != AT_OK) bail(status, "cannot inspect cache '" + cache_path + "'");
    const json stats = json::parse(take_string(stats_raw));
    std::printf("fingerprint: %s\n", stats.at("fingerprint").get<std::string>().c_str());
    std::printf("entries: %lld\n", stats.at("entries").get<long long>());
    std::printf("recorded queries: %lld hits / %lld misses (hit rate %.4g)\n",
                stats.at("hits").get<long long>(), stats.at("misses").get<long long>(),
                stats.at("hit_rate").get<double>());
    std::fputs(take_string(timeline_raw).c_str(), stdout);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"archtree: latency-aware structured pruning"};
    app.require_subcommand(1);

    // analyze
    std::string an_model, an_weights;
    auto* analyze = app.add_subcommand("analyze", "print the channel groups of a model");
    analyze->add_option("--model", an_model, "model manifest (JSON)")->required();
    analyze->add_option("--weights", an_weights, "weights file (defaults to <model>.bin)");

    // prune
    PruneOptions prune_opt;
    auto* prune = app.add_subcommand("prune", "run the pruning search");
    prune->add_option("--manifest", prune_opt.manifest_path, "run manifest (JSON)");
    prune->add_option("--model", prune_opt.model, "model manifest (JSON)");
    prune->add_option("--weights", prune_opt.weights, "weights file");
    prune->add_option("--goal", prune_opt.goal, "latency goal: fraction (0.5) or absolute (12ms)");
    prune->add_option("--steps", prune_opt.steps, "number of pruning steps");
    prune->add_option("--alive", prune_opt.alive, "beam width: alive nodes per step");
    prune->add_option("--provider", prune_opt.provider,
                      "analytical | analytical:<params.json> | replay:<file> | command:<template>");
    prune->add_option("--cache", prune_opt.cache, "persistent latency cache file");
    prune->add_option("--seed", prune_opt.seed, "run seed; all randomness flows from it");
    prune->add_option("--out", prune_opt.out, "output directory (default .)");
    prune->add_option("--delta", prune_opt.delta, "exploration step: sqrt | log | fixed:<k>");
    prune->add_option("--dataset", prune_opt.dataset,
                      "blobs[:features[:classes[:samples]]] | csv:<path>:<label_column>");
    prune->add_option("--workers", prune_opt.workers, "fine-tuning worker count (default 1)");
    prune->add_flag("--no-early-stop", prune_opt.no_early_stop,
                    "disable importance-based early stopping");
    prune->add_flag("--no-finetune", prune_opt.no_finetune,
                    "disable weight updates (deterministic harness mode)");

    // curve
    std::string cv_model, cv_weights, cv_provider = "analytical", cv_cache, cv_out;
    int cv_group = 0;
    auto* curve = app.add_subcommand("curve", "latency-vs-channels sweeps for one group");
    curve->add_option("--model", cv_model, "model manifest (JSON)")->required();
    curve->add_option("--weights", cv_weights, "weights file");
    curve->add_option("--group", cv_group, "channel group index")->required();
    curve->add_option("--provider", cv_provider, "latency provider (default analytical)");
    curve->add_option("--cache", cv_cache, "persistent latency cache file");
    curve->add_option("--out", cv_out, "write CSV here instead of stdout");

    // cache stats
    auto* cache_cmd = app.add_subcommand("cache", "cache utilities");
    cache_cmd->require_subcommand(1);
    std::string cs_cache;
    auto* cache_stats = cache_cmd->add_subcommand("stats", "print counters and the hit/miss timeline");
    cache_stats->add_option("--cache", cs_cache, "cache file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*analyze) return cmd_analyze(an_model, an_weights);
        if (*prune) return cmd_prune(prune_opt);
        if (*curve)
            return cmd_curve(cv_model, cv_weights, cv_group, cv_provider, cv_cache, cv_out);
        if (*cache_stats) return cmd_cache_stats(cs_cache);
    } catch (const CliFailure& failure) {
        std::fprintf(stderr, "error: %s\n", failure.message.c_str());
        return failure.code;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
