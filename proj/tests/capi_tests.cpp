// Copyright (c) 2026 The archtree authors
// SPDX-License-Identifier: Apache-2.0
//
// Exercises the shared-library surface end to end: opaque handles, error
// codes, string ownership. Fixture models are built with the C++ core and
// saved to disk; everything else goes through archtree/archtree.h.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "archtree/archtree.h"
#include "graph/serialize.hpp"
#include "importance/importance.hpp"
#include "support/builders.hpp"

using nlohmann::json;
using namespace archtree::testing;

namespace {

std::filesystem::path fresh_dir(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() / ("archtree_capi_" + tag);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string take(char* s) {
    std::string out = s ? s : "";
    at_string_free(s);
    return out;
}

std::string write_mlp_fixture(const std::filesystem::path& dir) {
    const archtree::ModelGraph m = mlp(8, {16, 16}, 3, 5);
    const std::string path = (dir / "model.json").string();
    archtree::save_model(m, path);
    return path;
}

const char* kToyProviderSpec =
    R"({"kind":"analytical","params":{"align":2,"slant":0.6,)"
    R"("cost_per_unit":{"Dense":1e-3,"Conv2d":1e-4},)"
    R"("layer_overhead_ms":0.0005,"base_ms":0.001}})";

}  // namespace

TEST_CASE("capi: version and status names") {
    CHECK(std::string(at_version()) == "0.1.0");
    CHECK(std::string(at_status_name(AT_OK)) == "ok");
    CHECK(std::string(at_status_name(AT_ERR_INFEASIBLE)) == "infeasible");
}

TEST_CASE("capi: model lifecycle, validation and signature") {
    const auto dir = fresh_dir("model");
    const std::string path = write_mlp_fixture(dir);

    at_model* model = nullptr;
    REQUIRE(at_model_load(path.c_str(), nullptr, &model) == AT_OK);

    char* violations = nullptr;
    REQUIRE(at_model_validate(model, &violations) == AT_OK);
    CHECK(take(violations) == "[]");

    char* sig = nullptr;
    REQUIRE(at_model_signature(model, &sig) == AT_OK);
    CHECK(take(sig) == "[8,16,16,3]");

    unsigned long long params = 0;
    REQUIRE(at_model_param_count(model, &params) == AT_OK);
    CHECK(params == 8ull * 16 + 16 + 16 * 16 + 16 + 16 * 3 + 3);

    const std::string copy = (dir / "copy.json").string();
    REQUIRE(at_model_save(model, copy.c_str(), nullptr) == AT_OK);
    at_model* reloaded = nullptr;
    REQUIRE(at_model_load(copy.c_str(), nullptr, &reloaded) == AT_OK);
    at_model_free(reloaded);
    at_model_free(model);

    at_model* missing = nullptr;
    CHECK(at_model_load((dir / "nope.json").string().c_str(), nullptr, &missing) == AT_ERR_IO);
    CHECK(std::string(at_last_error()).size() > 0);
    CHECK(at_model_load(nullptr, nullptr, &missing) == AT_ERR_ARGUMENT);
}

TEST_CASE("capi: groups description") {
    const auto dir = fresh_dir("groups");
    const std::string path = write_mlp_fixture(dir);
    at_model* model = nullptr;
    REQUIRE(at_model_load(path.c_str(), nullptr, &model) == AT_OK);

    at_groups* groups = nullptr;
    REQUIRE(at_groups_build(model, &groups) == AT_OK);
    char* desc = nullptr;
    REQUIRE(at_groups_describe(groups, &desc) == AT_OK);
    const json parsed = json::parse(take(desc));
    REQUIRE(parsed.size() == 4);
    CHECK(parsed[0].at("channels") == 8);
    CHECK_FALSE(parsed[0].at("prunable").get<bool>());
    CHECK(parsed[1].at("prunable").get<bool>());
    CHECK(parsed[3].at("channels") == 3);
    at_groups_free(groups);
    at_model_free(model);
}

TEST_CASE("capi: providers measure and propagate error codes") {
    const auto dir = fresh_dir("provider");
    const std::string path = write_mlp_fixture(dir);
    at_model* model = nullptr;
    REQUIRE(at_model_load(path.c_str(), nullptr, &model) == AT_OK);

    at_provider* analytical = nullptr;
    REQUIRE(at_provider_create(kToyProviderSpec, &analytical) == AT_OK);
    double ms = 0.0;
    REQUIRE(at_provider_measure(analytical, model, nullptr, &ms) == AT_OK);
    CHECK(ms > 0.0);

    at_provider* broken = nullptr;
    CHECK(at_provider_create(R"({"kind":"psychic"})", &broken) == AT_ERR_ARGUMENT);
    CHECK(at_provider_create("not json", &broken) == AT_ERR_FORMAT);

    // Replay misses surface as AT_ERR_UNMEASURED.
    const auto table = (dir / "table.jsonl").string();
    {
        std::ofstream out(table);
        out << R"({"signature":[1,2],"ms":3.0})" << "\n";
    }
    at_provider* replay = nullptr;
    const std::string spec = std::string(R"({"kind":"replay","path":")") + table + "\"}";
    REQUIRE(at_provider_create(spec.c_str(), &replay) == AT_OK);
    CHECK(at_provider_measure(replay, model, nullptr, &ms) == AT_ERR_UNMEASURED);

    at_provider* command = nullptr;
    REQUIRE(at_provider_create(R"({"kind":"command","template":"false # {model_path}"})",
                               &command) == AT_OK);
    CHECK(at_provider_measure(command, model, nullptr, &ms) == AT_ERR_PROVIDER);

    at_provider_free(analytical);
    at_provider_free(replay);
    at_provider_free(command);
    at_model_free(model);
}

TEST_CASE("capi: cache fingerprinting, memoization and inspection") {
    const auto dir = fresh_dir("cache");
    const std::string path = write_mlp_fixture(dir);
    at_model* model = nullptr;
    REQUIRE(at_model_load(path.c_str(), nullptr, &model) == AT_OK);
    at_provider* provider = nullptr;
    REQUIRE(at_provider_create(kToyProviderSpec, &provider) == AT_OK);

    char* hex_raw = nullptr;
    REQUIRE(at_fingerprint(model, kToyProviderSpec, &hex_raw) == AT_OK);
    const std::string hex = take(hex_raw);
    CHECK(hex.size() == 16);

    const std::string cache_path = (dir / "cache.jsonl").string();
    at_cache* cache = nullptr;
    REQUIRE(at_cache_open(cache_path.c_str(), hex.c_str(), &cache) == AT_OK);
    double a = 0.0, b = 0.0;
    REQUIRE(at_cache_get_or_measure(cache, provider, model, nullptr, &a) == AT_OK);
    REQUIRE(at_cache_get_or_measure(cache, provider, model, nullptr, &b) == AT_OK);
    CHECK(a == b);
    char* stats_raw = nullptr;
    REQUIRE(at_cache_stats(cache, &stats_raw) == AT_OK);
    const json stats = json::parse(take(stats_raw));
    CHECK(stats.at("hits") == 1);
    CHECK(stats.at("misses") == 1);
    at_cache_free(cache);

    at_cache* wrong = nullptr;
    CHECK(at_cache_open(cache_path.c_str(), "0000000000000000", &wrong) == AT_ERR_FINGERPRINT);

    char* file_stats = nullptr;
    char* timeline = nullptr;
    REQUIRE(at_cache_inspect(cache_path.c_str(), &file_stats, &timeline) == AT_OK);
    const json info = json::parse(take(file_stats));
    CHECK(info.at("entries") == 1);
    CHECK(info.at("hits") == 1);
    CHECK(info.at("misses") == 1);
    const std::string tl = take(timeline);
    CHECK(tl.rfind("run,seq,hit,signature,ms\n", 0) == 0);
    CHECK(std::count(tl.begin(), tl.end(), '\n') == 3);

    at_provider_free(provider);
    at_model_free(model);
}

TEST_CASE("capi: search run produces models, report and exit characteristics") {
    const auto dir = fresh_dir("search");
    const std::string path = write_mlp_fixture(dir);
    at_model* model = nullptr;
    REQUIRE(at_model_load(path.c_str(), nullptr, &model) == AT_OK);
    at_provider* provider = nullptr;
    REQUIRE(at_provider_create(kToyProviderSpec, &provider) == AT_OK);

    const char* config = R"({
        "steps": 2, "beam_width": 2, "goal": {"value": 0.6, "relative": true},
        "seed": 7, "finetune": false, "final_tune_batches": 0,
        "train": {"batches_per_step": 4, "batch_size": 16},
        "dataset": {"kind": "blobs", "features": 8, "classes": 3, "samples": 160}
    })";
    at_run_result* run = nullptr;
    REQUIRE(at_search_run(model, config, provider, nullptr, &run) == AT_OK);

    size_t count = 0;
    REQUIRE(at_run_result_count(run, &count) == AT_OK);
    CHECK(count == 2);
    char* report_raw = nullptr;
    REQUIRE(at_run_result_report(run, &report_raw) == AT_OK);
    const json report = json::parse(take(report_raw));
    CHECK(report.at("steps").size() == 2);
    const double goal = report.at("goal_ms").get<double>();
    for (const auto& r : report.at("results"))
        CHECK(r.at("latency_ms").get<double>() <= goal + 1e-12);

    at_model* pruned = nullptr;
    REQUIRE(at_run_result_model(run, 0, &pruned) == AT_OK);
    char* sig = nullptr;
    REQUIRE(at_model_signature(pruned, &sig) == AT_OK);
    CHECK(json::parse(take(sig)) == report.at("results").at(0).at("signature"));
    at_model_free(pruned);
    at_model* oob = nullptr;
    CHECK(at_run_result_model(run, 5, &oob) == AT_ERR_ARGUMENT);
    at_run_result_free(run);

    // Unknown config keys are rejected, infeasible goals carry their code.
    at_run_result* bad = nullptr;
    CHECK(at_search_run(model, R"({"stepz": 1})", provider, nullptr, &bad) == AT_ERR_ARGUMENT);
    const char* impossible = R"({
        "steps": 1, "beam_width": 1, "goal": {"value": 0.001, "relative": true},
        "seed": 7, "finetune": false, "final_tune_batches": 0,
        "train": {"batches_per_step": 2, "batch_size": 8},
        "dataset": {"kind": "blobs", "features": 8, "classes": 3, "samples": 120}
    })";
    CHECK(at_search_run(model, impossible, provider, nullptr, &bad) == AT_ERR_INFEASIBLE);
    CHECK(std::string(at_last_error()).find("step 1") != std::string::npos);
    CHECK(at_search_run(model, R"({"steps": 1})", provider, nullptr, &bad) == AT_ERR_ARGUMENT);

    at_provider_free(provider);
    at_model_free(model);
}

TEST_CASE("capi: externally computed importance drives the search") {
    const auto dir = fresh_dir("importance");
    const archtree::ModelGraph m = mlp(6, {12}, 3, 9);
    const std::string path = (dir / "model.json").string();
    archtree::save_model(m, path);

    // Hand-written importance: channel k of the hidden layer matters more
    // with k, so pruning keeps the top channels.
    archtree::ImportanceState state = archtree::ImportanceState::for_model(m);
    auto& acc = state.per_weight.at("fc1.weight");
    for (std::int64_t o = 0; o < 12; ++o)
        for (std::int64_t i = 0; i < 6; ++i)
            acc[static_cast<std::size_t>(o * 6 + i)] = static_cast<double>(o + 1);
    state.batches = 1;
    const std::string imp = (dir / "imp.json").string();
    archtree::save_importance(m, state, imp);

    at_model* model = nullptr;
    REQUIRE(at_model_load(path.c_str(), nullptr, &model) == AT_OK);
    at_provider* provider = nullptr;
    REQUIRE(at_provider_create(kToyProviderSpec, &provider) == AT_OK);
    const std::string config = std::string(R"({
        "steps": 1, "beam_width": 1, "goal": {"value": 0.7, "relative": true},
        "seed": 3, "finetune": false, "final_tune_batches": 0,
        "importance": {"manifest": ")") + imp + R"("}})";
    at_run_result* run = nullptr;
    REQUIRE(at_search_run(model, config.c_str(), provider, nullptr, &run) == AT_OK);
    char* report_raw = nullptr;
    REQUIRE(at_run_result_report(run, &report_raw) == AT_OK);
    const json report = json::parse(take(report_raw));
    // The hidden group shrank and kept the high-importance channels.
    CHECK(report.at("results").at(0).at("signature").at(1).get<int>() < 12);
    at_run_result_free(run);
    at_provider_free(provider);
    at_model_free(model);
}

TEST_CASE("capi: curve sweeps through the C surface") {
    const auto dir = fresh_dir("curve");
    const std::string path = write_mlp_fixture(dir);
    at_model* model = nullptr;
    REQUIRE(at_model_load(path.c_str(), nullptr, &model) == AT_OK);
    at_provider* provider = nullptr;
    REQUIRE(at_provider_create(kToyProviderSpec, &provider) == AT_OK);

    char* csv_raw = nullptr;
    REQUIRE(at_curve_csv(model, 1, provider, nullptr, &csv_raw) == AT_OK);
    const std::string csv = take(csv_raw);
    CHECK(csv.rfind("channels_left,ms,sweep\n", 0) == 0);
    CHECK(csv.find(",fine\n") != std::string::npos);
    CHECK(csv.find(",adaptive\n") != std::string::npos);

    CHECK(at_curve_csv(model, 0, provider, nullptr, &csv_raw) == AT_ERR_ARGUMENT);
    CHECK(at_curve_csv(model, 99, provider, nullptr, &csv_raw) == AT_ERR_ARGUMENT);

    at_provider_free(provider);
    at_model_free(model);
}
