// Copyright (c) 2026 The archtree authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include <nlohmann/json_fwd.hpp>

#include "graph/model.hpp"

namespace archtree {

/// Derives "<stem>.bin" from a manifest path ("model.json" -> "model.bin").
std::string default_weights_path(const std::string& manifest_path);

/// JSON manifest describing layers and a tensor index; raw little-endian f32
/// data lives in the sibling weights file at the indexed offsets. Round trips
/// are bit-exact on tensor data and canonical on the manifest.
void save_model(const ModelGraph& model, const std::string& manifest_path,
                const std::string& weights_path = "");

ModelGraph load_model(const std::string& manifest_path, const std::string& weights_path = "");

/// Manifest JSON exactly as save_model writes it (weights excluded). Used for
/// cache fingerprints as well as for saving.
nlohmann::json model_manifest(const ModelGraph& model);

}  // namespace archtree
