// Copyright (c) 2026 The archtree authors
// SPDX-License-Identifier: Apache-2.0
//
// Stand-in benchmark backend for provider tests: loads a serialized model
// and prints its analytical latency, exactly as a real device harness would
// print a measured number.

#include <cstdio>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "graph/serialize.hpp"
#include "latency/provider.hpp"

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: analytical_echo <model.json> [params.json]\n");
        return 2;
    }
    try {
        const archtree::ModelGraph model = archtree::load_model(argv[1]);
        archtree::AnalyticalParams params;
        if (argc > 2) {
            std::ifstream in(argv[2]);
            params = archtree::AnalyticalParams::from_json(nlohmann::json::parse(in));
        }
        std::printf("%.12f\n", archtree::analytical_latency_ms(model, params));
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "analytical_echo: %s\n", e.what());
        return 1;
    }
}
