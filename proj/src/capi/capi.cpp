// Copyright (c) 2026 The archtree authors
// SPDX-License-Identifier: Apache-2.0

#include "archtree/archtree.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "cache/cache.hpp"
#include "core/error.hpp"
#include "exec/dataset.hpp"
#include "graph/groups.hpp"
#include "graph/model.hpp"
#include "graph/serialize.hpp"
#include "importance/importance.hpp"
#include "latency/provider.hpp"
#include "search/curve.hpp"
#include "search/search.hpp"

using nlohmann::json;

struct at_model {
    archtree::ModelGraph graph;
};

struct at_groups {
    archtree::GroupSet set;
};

struct at_provider {
    std::unique_ptr<archtree::LatencyProvider> provider;
    json spec;
};

struct at_cache {
    std::unique_ptr<archtree::LatencyCache> cache;
};

struct at_run_result {
    archtree::RunResult result;
};

namespace {

thread_local std::string g_last_error;

at_status map_code(archtree::ErrorCode code) {
    using archtree::ErrorCode;
    switch (code) {
        case ErrorCode::Argument: return AT_ERR_ARGUMENT;
        case ErrorCode::Io: return AT_ERR_IO;
        case ErrorCode::Format: return AT_ERR_FORMAT;
        case ErrorCode::Validation: return AT_ERR_VALIDATION;
        case ErrorCode::Unsupported: return AT_ERR_UNSUPPORTED;
        case ErrorCode::Provider: return AT_ERR_PROVIDER;
        case ErrorCode::Unmeasured: return AT_ERR_UNMEASURED;
        case ErrorCode::Timeout: return AT_ERR_TIMEOUT;
        case ErrorCode::Fingerprint: return AT_ERR_FINGERPRINT;
        case ErrorCode::Infeasible: return AT_ERR_INFEASIBLE;
        case ErrorCode::Internal: return AT_ERR_INTERNAL;
    }
    return AT_ERR_INTERNAL;
}

template <typename Fn>
at_status wrap(Fn&& fn) noexcept {
    try {
        fn();
        g_last_error.clear();
        return AT_OK;
    } catch (const archtree::Error& e) {
        g_last_error = e.what();
        return map_code(e.code());
    } catch (const json::exception& e) {
        g_last_error = e.what();
        return AT_ERR_FORMAT;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return AT_ERR_INTERNAL;
    } catch (...) {
        g_last_error = "unknown failure";
        return AT_ERR_INTERNAL;
    }
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out) std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void require(bool ok, const char* what) {
    if (!ok) archtree::fail(archtree::ErrorCode::Argument, what);
}

archtree::BenchmarkProtocol protocol_or_default(const char* protocol_json) {
    if (!protocol_json || !*protocol_json) return archtree::BenchmarkProtocol::exploration();
    return archtree::BenchmarkProtocol::from_json(json::parse(protocol_json));
}

archtree::Dataset dataset_from_spec(const json& spec, std::uint64_t default_seed) {
    const auto kind = spec.value("kind", std::string{});
    if (kind == "blobs") {
        archtree::BlobsConfig cfg;
        cfg.seed = spec.value("seed", default_seed);
        cfg.n_classes = spec.value("classes", cfg.n_classes);
        cfg.n_features = spec.value("features", cfg.n_features);
        cfg.n_samples = spec.value("samples", cfg.n_samples);
        cfg.channels = spec.value("channels", cfg.channels);
        cfg.height = spec.value("height", cfg.height);
        cfg.width = spec.value("width", cfg.width);
        cfg.train_fraction = spec.value("train_fraction", cfg.train_fraction);
        cfg.center_spread = spec.value("center_spread", cfg.center_spread);
        cfg.noise_sigma = spec.value("noise_sigma", cfg.noise_sigma);
        return archtree::Dataset::synthetic_blobs(cfg);
    }
    if (kind == "csv") {
        if (!spec.contains("path") || !spec.contains("label_column"))
            archtree::fail(archtree::ErrorCode::Argument,
                           "csv dataset spec needs 'path' and 'label_column'");
        return archtree::Dataset::from_csv(spec.at("path").get<std::string>(),
                                           spec.at("label_column").get<std::string>(),
                                           spec.value("train_fraction", 0.8),
                                           spec.value("seed", default_seed));
    }
    archtree::fail(archtree::ErrorCode::Argument, "unknown dataset kind '" + kind + "'");
}

}  // namespace

extern "C" {

const char* at_version(void) { return "0.1.0"; }

const char* at_status_name(at_status status) {
    switch (status) {
        case AT_OK: return "ok";
        case AT_ERR_ARGUMENT: return "argument";
        case AT_ERR_IO: return "io";
        case AT_ERR_FORMAT: return "format";
        case AT_ERR_VALIDATION: return "validation";
        case AT_ERR_UNSUPPORTED: return "unsupported";
        case AT_ERR_PROVIDER: return "provider";
        case AT_ERR_UNMEASURED: return "unmeasured";
        case AT_ERR_TIMEOUT: return "timeout";
        case AT_ERR_FINGERPRINT: return "fingerprint";
        case AT_ERR_INFEASIBLE: return "infeasible";
        case AT_ERR_INTERNAL: return "internal";
    }
    return "unknown";
}

const char* at_last_error(void) { return g_last_error.c_str(); }

void at_string_free(char* s) { std::free(s); }

at_status at_model_load(const char* manifest_path, const char* weights_path, at_model** out) {
    return wrap([&] {
        require(manifest_path && out, "at_model_load: null argument");
        auto model = std::make_unique<at_model>();
        model->graph =
            archtree::load_model(manifest_path, weights_path ? weights_path : std::string{});
        *out = model.release();
    });
}

at_status at_model_save(const at_model* model, const char* manifest_path,
                        const char* weights_path) {
    return wrap([&] {
        require(model && manifest_path, "at_model_save: null argument");
        archtree::save_model(model->graph, manifest_path,
                             weights_path ? weights_path : std::string{});
    });
}

void at_model_free(at_model* model) { delete model; }

at_status at_model_validate(const at_model* model, char** violations_json) {
    return wrap([&] {
        require(model && violations_json, "at_model_validate: null argument");
        json out = json::array();
        for (const auto& v : archtree::validate_graph(model->graph))
            out.push_back({{"layer", v.layer_id}, {"message", v.message}});
        *violations_json = dup_string(out.dump());
    });
}

at_status at_model_signature(const at_model* model, char** counts_json) {
    return wrap([&] {
        require(model && counts_json, "at_model_signature: null argument");
        const auto sig = archtree::build_channel_groups(model->graph).signature();
        *counts_json = dup_string(json(sig.counts).dump());
    });
}

at_status at_model_param_count(const at_model* model, unsigned long long* out) {
    return wrap([&] {
        require(model && out, "at_model_param_count: null argument");
        *out = static_cast<unsigned long long>(model->graph.parameter_count());
    });
}

at_status at_groups_build(const at_model* model, at_groups** out) {
    return wrap([&] {
        require(model && out, "at_groups_build: null argument");
        auto groups = std::make_unique<at_groups>();
        groups->set = archtree::build_channel_groups(model->graph);
        *out = groups.release();
    });
}

void at_groups_free(at_groups* groups) { delete groups; }

at_status at_groups_describe(const at_groups* groups, char** out_json) {
    return wrap([&] {
        require(groups && out_json, "at_groups_describe: null argument");
        json out = json::array();
        for (const auto& g : groups->set.groups) {
            json members = json::array();
            for (const auto& m : g.members)
                members.push_back(
                    {{"layer", m.layer_id}, {"port", archtree::port_side_name(m.side)}});
            out.push_back({{"index", g.index},
                           {"channels", g.channel_count},
                           {"prunable", g.prunable},
                           {"members", members}});
        }
        *out_json = dup_string(out.dump());
    });
}

at_status at_provider_create(const char* spec_json, at_provider** out) {
    return wrap([&] {
        require(spec_json && out, "at_provider_create: null argument");
        auto handle = std::make_unique<at_provider>();
        handle->spec = json::parse(spec_json);
        handle->provider = archtree::make_provider(handle->spec);
        *out = handle.release();
    });
}

void at_provider_free(at_provider* provider) { delete provider; }

at_status at_provider_measure(at_provider* provider, const at_model* model,
                              const char* protocol_json, double* out_ms) {
    return wrap([&] {
        require(provider && model && out_ms, "at_provider_measure: null argument");
        const auto sig = archtree::build_channel_groups(model->graph).signature();
        *out_ms = provider->provider->measure_ms(model->graph, sig,
                                                 protocol_or_default(protocol_json));
    });
}

at_status at_fingerprint(const at_model* root_model, const char* provider_spec_json,
                         char** hex) {
    return wrap([&] {
        require(root_model && provider_spec_json && hex, "at_fingerprint: null argument");
        auto provider = archtree::make_provider(json::parse(provider_spec_json));
        *hex = dup_string(archtree::cache_fingerprint(root_model->graph, *provider));
    });
}

at_status at_cache_open(const char* path, const char* fingerprint_hex, at_cache** out) {
    return wrap([&] {
        require(out, "at_cache_open: null argument");
        auto handle = std::make_unique<at_cache>();
        if (path && *path) {
            require(fingerprint_hex && *fingerprint_hex,
                    "at_cache_open: a file cache needs a fingerprint");
            handle->cache = std::make_unique<archtree::LatencyCache>(path, fingerprint_hex);
        } else {
            handle->cache = std::make_unique<archtree::LatencyCache>();
        }
        *out = handle.release();
    });
}

void at_cache_free(at_cache* cache) { delete cache; }

at_status at_cache_stats(const at_cache* cache, char** stats_json) {
    return wrap([&] {
        require(cache && stats_json, "at_cache_stats: null argument");
        const auto stats = cache->cache->stats();
        json out = {{"hits", stats.hits},
                    {"misses", stats.misses},
                    {"hit_rate", stats.hit_rate()},
                    {"entries", cache->cache->entry_count()}};
        *stats_json = dup_string(out.dump());
    });
}

at_status at_cache_get_or_measure(at_cache* cache, at_provider* provider, const at_model* model,
                                  const char* protocol_json, double* out_ms) {
    return wrap([&] {
        require(cache && provider && model && out_ms, "at_cache_get_or_measure: null argument");
        const auto sig = archtree::build_channel_groups(model->graph).signature();
        *out_ms = cache->cache->get_or_measure(*provider->provider, model->graph, sig,
                                               protocol_or_default(protocol_json));
    });
}

at_status at_cache_inspect(const char* path, char** stats_json, char** timeline_csv) {
    return wrap([&] {
        require(path, "at_cache_inspect: null argument");
        const auto info = archtree::inspect_cache_file(path);
        if (stats_json) {
            const auto total = info.hits + info.misses;
            json out = {{"fingerprint", info.fingerprint},
                        {"entries", info.entries},
                        {"hits", info.hits},
                        {"misses", info.misses},
                        {"hit_rate", total ? static_cast<double>(info.hits) /
                                                 static_cast<double>(total)
                                           : 0.0}};
            *stats_json = dup_string(out.dump());
        }
        if (timeline_csv) {
            std::string csv = "run,seq,hit,signature,ms\n";
            char buf[160];
            for (const auto& row : info.timeline) {
                std::snprintf(buf, sizeof(buf), "%lld,%lld,%d,%s,%.9g\n",
                              static_cast<long long>(row.run), static_cast<long long>(row.seq),
                              row.hit ? 1 : 0, row.signature.c_str(), row.ms);
                csv += buf;
            }
            *timeline_csv = dup_string(csv);
        }
    });
}

at_status at_search_run(const at_model* root_model, const char* config_json,
                        at_provider* provider, at_cache* cache, at_run_result** out) {
    return wrap([&] {
        require(root_model && config_json && provider && out, "at_search_run: null argument");
        json raw = json::parse(config_json);

        std::optional<json> dataset_spec;
        if (raw.contains("dataset")) {
            dataset_spec = raw.at("dataset");
            raw.erase("dataset");
        }
        std::optional<json> importance_spec;
        if (raw.contains("importance")) {
            importance_spec = raw.at("importance");
            raw.erase("importance");
        }
        const archtree::SearchConfig config = archtree::SearchConfig::from_json(raw);

        std::optional<archtree::Dataset> dataset;
        if (dataset_spec) dataset.emplace(dataset_from_spec(*dataset_spec, config.seed));

        std::unique_ptr<archtree::ImportanceSource> importance;
        if (importance_spec) {
            const auto manifest = importance_spec->value("manifest", std::string{});
            require(!manifest.empty(), "importance spec needs a 'manifest' path");
            const auto state = archtree::load_importance(root_model->graph, manifest,
                                                         importance_spec->value("blob", std::string{}));
            importance = std::make_unique<archtree::FixedImportanceSource>(
                archtree::FixedImportanceSource::from_state(root_model->graph, state,
                                                            config.reductions));
        } else if (dataset) {
            importance = std::make_unique<archtree::TrainingImportanceSource>(
                *dataset, config.train, config.reductions);
        } else {
            archtree::fail(archtree::ErrorCode::Argument,
                           "search needs a 'dataset' or an 'importance' source");
        }

        archtree::SearchServices services{*provider->provider, *importance,
                                          cache ? cache->cache.get() : nullptr,
                                          dataset ? &*dataset : nullptr};
        auto handle = std::make_unique<at_run_result>();
        handle->result = archtree::run_search(root_model->graph, config, services);
        *out = handle.release();
    });
}

void at_run_result_free(at_run_result* result) { delete result; }

at_status at_run_result_report(const at_run_result* result, char** report_json) {
    return wrap([&] {
        require(result && report_json, "at_run_result_report: null argument");
        *report_json = dup_string(result->result.report.dump(2));
    });
}

at_status at_run_result_count(const at_run_result* result, size_t* count) {
    return wrap([&] {
        require(result && count, "at_run_result_count: null argument");
        *count = result->result.bundles.size();
    });
}

at_status at_run_result_model(const at_run_result* result, size_t index, at_model** out) {
    return wrap([&] {
        require(result && out, "at_run_result_model: null argument");
        require(index < result->result.bundles.size(), "at_run_result_model: index out of range");
        auto model = std::make_unique<at_model>();
        model->graph = result->result.bundles[index].model;
        *out = model.release();
    });
}

at_status at_curve_csv(const at_model* model, int group_index, at_provider* provider,
                       at_cache* cache, char** csv) {
    return wrap([&] {
        require(model && provider && csv, "at_curve_csv: null argument");
        const std::string out = archtree::latency_curve_csv(
            model->graph, group_index, *provider->provider,
            cache ? cache->cache.get() : nullptr, archtree::StepPolicy{},
            archtree::BenchmarkProtocol::exploration());
        *csv = dup_string(out);
    });
}

}  // extern "C"
