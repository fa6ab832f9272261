// Copyright (c) 2026 The archtree authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end checks of the command-line front end: exit codes, printed
// output and on-disk artifacts.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "graph/serialize.hpp"
#include "support/builders.hpp"

using nlohmann::json;
using namespace archtree::testing;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int exit_code = -1;
    std::string output;  // stdout and stderr interleaved
};

CliResult run_cli(const std::string& args) {
    const std::string command = std::string(ARCHTREE_CLI_BIN) + " " + args + " 2>&1";
    FILE* pipe = popen(command.c_str(), "r");
    REQUIRE(pipe != nullptr);
    CliResult result;
    std::array<char, 4096> buf{};
    while (std::fgets(buf.data(), buf.size(), pipe)) result.output += buf.data();
    const int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

fs::path fresh_dir(const std::string& tag) {
    auto dir = fs::temp_directory_path() / ("archtree_cli_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string toy_provider_file(const fs::path& dir) {
    const auto path = (dir / "provider_params.json").string();
    std::ofstream out(path);
    out << R"({"align":2,"slant":0.6,"cost_per_unit":{"Dense":1e-3,"Conv2d":1e-4},)"
        << R"("layer_overhead_ms":0.0005,"base_ms":0.001})";
    return path;
}

int count_lines(const std::string& text) {
    return static_cast<int>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

TEST_CASE("cli: analyze prints the group table") {
    const auto dir = fresh_dir("analyze");
    const std::string model = (dir / "chain.json").string();
    archtree::save_model(dense_chain(), model);

    const CliResult r = run_cli("analyze --model " + model);
    CHECK(r.exit_code == 0);
    // Header plus four group rows, two of them prunable.
    CHECK(count_lines(r.output) == 5);
    CHECK(std::count(r.output.begin(), r.output.end()- 1, '\n') >= 0);
    CHECK(r.output.find("yes") != std::string::npos);
    int prunable_rows = 0;
    std::stringstream ss(r.output);
    std::string line;
    while (std::getline(ss, line))
        if (line.find(" yes ") != std::string::npos || line.find("yes") != std::string::npos)
            prunable_rows += line.find("yes") != std::string::npos;
    CHECK(prunable_rows == 2);
}

TEST_CASE("cli: analyze shows three groups for the projection block") {
    const auto dir = fresh_dir("analyze_block");
    const std::string model = (dir / "block.json").string();
    archtree::save_model(resnet_block(true), model);
    const CliResult r = run_cli("analyze --model " + model);
    CHECK(r.exit_code == 0);
    CHECK(count_lines(r.output) == 4);  // header + 3 groups
}

TEST_CASE("cli: malformed model exits with the input-error code") {
    const auto dir = fresh_dir("analyze_bad");
    const std::string model = (dir / "bad.json").string();
    {
        std::ofstream out(model);
        out << "{ not json";
    }
    const CliResult r = run_cli("analyze --model " + model);
    CHECK(r.exit_code == 2);

    const CliResult missing = run_cli("analyze --model " + (dir / "absent.json").string());
    CHECK(missing.exit_code == 2);

    // Structurally invalid model: violations are printed.
    archtree::ModelGraph broken = dense_chain();
    broken.tensors.erase("fc2.weight");
    const std::string invalid = (dir / "invalid.json").string();
    archtree::save_model(broken, invalid);
    const CliResult rv = run_cli("analyze --model " + invalid);
    CHECK(rv.exit_code == 2);
    CHECK(rv.output.find("fc2") != std::string::npos);
}

TEST_CASE("cli: prune writes artifacts and honors the budget") {
    const auto dir = fresh_dir("prune");
    const std::string model = (dir / "model.json").string();
    archtree::save_model(mlp(8, {16, 16}, 3, 5), model);
    const std::string params = toy_provider_file(dir);
    const std::string out_dir = (dir / "out").string();

    const CliResult r = run_cli("prune --model " + model + " --goal 0.6 --steps 2 --alive 2" +
                                " --provider analytical:" + params +
                                " --dataset blobs:8:3:160 --seed 7 --no-finetune --out " +
                                out_dir);
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(out_dir + "/report.json"));
    CHECK(fs::exists(out_dir + "/model_1.json"));
    CHECK(fs::exists(out_dir + "/model_1.bin"));
    CHECK(fs::exists(out_dir + "/model_2.json"));

    std::ifstream in(out_dir + "/report.json");
    const json report = json::parse(in);
    const double goal = report.at("goal_ms").get<double>();
    for (const auto& res : report.at("results"))
        CHECK(res.at("latency_ms").get<double>() <= goal + 1e-12);

    // The written models load and match the reported signatures.
    const archtree::ModelGraph best = archtree::load_model(out_dir + "/model_1.json");
    CHECK(archtree::validate_graph(best).empty());
    CHECK(json(archtree::build_channel_groups(best).signature().counts) ==
          report.at("results").at(0).at("signature"));
}

TEST_CASE("cli: repeated deterministic run hits the cache completely") {
    const auto dir = fresh_dir("prune_cache");
    const std::string model = (dir / "model.json").string();
    archtree::save_model(mlp(8, {16, 16}, 3, 5), model);
    const std::string params = toy_provider_file(dir);
    const std::string cache = (dir / "cache.jsonl").string();

    const std::string common = "prune --model " + model + " --goal 0.6 --steps 2 --alive 2" +
                               " --provider analytical:" + params +
                               " --dataset blobs:8:3:160 --seed 7 --no-finetune --cache " +
                               cache + " --out ";
    const CliResult first = run_cli(common + (dir / "out1").string());
    REQUIRE(first.exit_code == 0);
    const CliResult second = run_cli(common + (dir / "out2").string());
    REQUIRE(second.exit_code == 0);

    std::ifstream in1((dir / "out1" / "report.json").string());
    std::ifstream in2((dir / "out2" / "report.json").string());
    const json r1 = json::parse(in1);
    const json r2 = json::parse(in2);
    CHECK(r2.at("cache").at("misses").get<int>() == 0);
    CHECK(r2.at("cache").at("hit_rate").get<double>() == 1.0);
    CHECK(r2.at("provider_calls").get<int>() == 0);
    CHECK(r1.at("results").dump() == r2.at("results").dump());

    // Reports are byte-identical apart from the cache/benchmark sections.
    json a = r1, b = r2;
    for (auto* j : {&a, &b}) {
        j->erase("cache");
        j->erase("provider_calls");
        j->erase("latency_queries");
        for (auto& s : j->at("steps")) {
            s.erase("cache");
            s.erase("benchmarks");
        }
    }
    CHECK(a.dump() == b.dump());
}

TEST_CASE("cli: goal above the root returns the root with a warning") {
    const auto dir = fresh_dir("prune_clamp");
    const std::string model = (dir / "model.json").string();
    archtree::save_model(mlp(8, {16}, 3, 5), model);
    const CliResult r = run_cli("prune --model " + model +
                                " --goal 1.5 --dataset blobs:8:3:120 --no-finetune --out " +
                                (dir / "out").string());
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("warning") != std::string::npos);
    std::ifstream in((dir / "out" / "report.json").string());
    const json report = json::parse(in);
    CHECK(report.at("results").size() == 1);
    CHECK(report.at("results").at(0).at("signature") == json({8, 16, 3}));
}

TEST_CASE("cli: infeasible goal exits 3 and names the failing step") {
    const auto dir = fresh_dir("prune_infeasible");
    const std::string model = (dir / "model.json").string();
    archtree::save_model(mlp(8, {16}, 3, 5), model);
    const std::string params = toy_provider_file(dir);
    const CliResult r = run_cli("prune --model " + model + " --goal 0.001 --steps 1" +
                                " --provider analytical:" + params +
                                " --dataset blobs:8:3:120 --no-finetune --out " +
                                (dir / "out").string());
    CHECK(r.exit_code == 3);
    CHECK(r.output.find("step 1") != std::string::npos);
}

TEST_CASE("cli: provider failures exit 4") {
    const auto dir = fresh_dir("prune_provider");
    const std::string model = (dir / "model.json").string();
    archtree::save_model(mlp(8, {16}, 3, 5), model);
    const CliResult r = run_cli("prune --model " + model +
                                " --goal 0.5 --provider \"command:false # {model_path}\"" +
                                " --dataset blobs:8:3:120 --no-finetune --out " +
                                (dir / "out").string());
    CHECK(r.exit_code == 4);
}

TEST_CASE("cli: manifest drives the run and unknown keys are rejected") {
    const auto dir = fresh_dir("manifest");
    const std::string model = (dir / "model.json").string();
    archtree::save_model(mlp(8, {16, 16}, 3, 5), model);

    json manifest = {
        {"model", model},
        {"goal", "0.6"},
        {"steps", 2},
        {"alive", 2},
        {"seed", 11},
        {"finetune", false},
        {"provider",
         json::parse(std::string(R"({"kind":"analytical","params":{"align":2,"slant":0.6,)") +
                     R"("cost_per_unit":{"Dense":1e-3},"layer_overhead_ms":0.0005,)" +
                     R"("base_ms":0.001}})")},
        {"dataset", {{"kind", "blobs"}, {"features", 8}, {"classes", 3}, {"samples", 160}}},
        {"out", (dir / "out").string()},
    };
    const std::string manifest_path = (dir / "run.json").string();
    {
        std::ofstream out(manifest_path);
        out << manifest.dump(2);
    }
    const CliResult r = run_cli("prune --manifest " + manifest_path);
    CHECK(r.exit_code == 0);
    CHECK(fs::exists((dir / "out" / "report.json").string()));

    manifest["banana"] = 1;
    {
        std::ofstream out(manifest_path);
        out << manifest.dump(2);
    }
    const CliResult bad = run_cli("prune --manifest " + manifest_path);
    CHECK(bad.exit_code == 2);
    CHECK(bad.output.find("banana") != std::string::npos);
}

TEST_CASE("cli: curve emits both sweeps as CSV") {
    const auto dir = fresh_dir("curve");
    const std::string model = (dir / "model.json").string();
    archtree::ModelGraph m;
    m.layers.push_back(input_layer("in", 8));
    m.layers.push_back(dense_layer(m, "fc1", "in", 8, 64));
    m.layers.push_back(dense_layer(m, "fc2", "fc1", 64, 4));
    m.layers.push_back(output_layer("out", "fc2"));
    archtree::initialize_weights(m, 3);
    archtree::save_model(m, model);

    const CliResult r = run_cli("curve --model " + model + " --group 1");
    CHECK(r.exit_code == 0);
    CHECK(r.output.rfind("channels_left,ms,sweep\n", 0) == 0);
    CHECK(count_lines(r.output) == 1 + 64 + 12);  // header + fine + adaptive ladder

    const CliResult frozen = run_cli("curve --model " + model + " --group 0");
    CHECK(frozen.exit_code == 2);

    const std::string csv_file = (dir / "curve.csv").string();
    const CliResult to_file =
        run_cli("curve --model " + model + " --group 1 --out " + csv_file);
    CHECK(to_file.exit_code == 0);
    CHECK(fs::exists(csv_file));
}

TEST_CASE("cli: cache stats reports counters and the timeline") {
    const auto dir = fresh_dir("cache_stats");
    const std::string model = (dir / "model.json").string();
    archtree::save_model(mlp(8, {16, 16}, 3, 5), model);
    const std::string params = toy_provider_file(dir);
    const std::string cache = (dir / "cache.jsonl").string();

    // Goal-change pair: 0.7 then 0.5 against one cache.
    const std::string base = "prune --model " + model + " --steps 2 --alive 2" +
                             " --provider analytical:" + params +
                             " --dataset blobs:8:3:160 --seed 7 --no-finetune --cache " + cache;
    REQUIRE(run_cli(base + " --goal 0.7 --out " + (dir / "o1").string()).exit_code == 0);
    REQUIRE(run_cli(base + " --goal 0.5 --out " + (dir / "o2").string()).exit_code == 0);

    const CliResult r = run_cli("cache stats --cache " + cache);
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("fingerprint:") != std::string::npos);
    CHECK(r.output.find("run,seq,hit,signature,ms") != std::string::npos);

    // The second run must mix hits and misses: it starts on the cached
    // prefix and diverges once the tighter goal explores new ground.
    std::ifstream in((dir / "o2" / "report.json").string());
    const json report = json::parse(in);
    const double rate = report.at("cache").at("hit_rate").get<double>();
    CHECK(rate > 0.0);
    CHECK(rate < 1.0);

    const CliResult missing = run_cli("cache stats --cache " + (dir / "none.jsonl").string());
    CHECK(missing.exit_code == 2);
}
