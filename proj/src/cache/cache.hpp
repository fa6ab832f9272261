// Copyright (c) 2026 The archtree authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <condition_variable>
#include <functional>
#include <mutex>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "graph/groups.hpp"
#include "latency/provider.hpp"

namespace archtree {

/// Hash of the root-model manifest plus the provider description. A cache is
/// only meaningful for one (architecture, provider) pair, so files carry this
/// in their header and refuse to load on mismatch.
std::string cache_fingerprint(const ModelGraph& root_model, const LatencyProvider& provider);
std::string cache_fingerprint(const ModelGraph& root_model, const nlohmann::json& provider_desc);

struct CacheStats {
    std::int64_t hits = 0;
    std::int64_t misses = 0;
    double hit_rate() const {
        const auto total = hits + misses;
        return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
    }
};

struct CacheEvent {
    Signature signature;
    bool hit = false;
    double ms = 0.0;
};

/// Signature -> milliseconds memo with hit/miss accounting. File-backed
/// caches persist append-only JSON lines after a fingerprint header; a crash
/// loses at most the in-flight entry. A sibling "<path>.events.csv" records
/// the hit/miss timeline across sessions.
///
/// get_or_measure is safe for concurrent callers and single-flight: one
/// provider call per unmeasured signature, everyone else waits for it.
class LatencyCache {
public:
    /// In-memory cache (no persistence).
    LatencyCache();

    /// Opens or creates `path`. An existing file must carry `fingerprint`.
    LatencyCache(const std::string& path, const std::string& fingerprint);

    double get_or_measure(const Signature& signature,
                          const std::function<double()>& measure);

    double get_or_measure(LatencyProvider& provider, const ModelGraph& model,
                          const Signature& signature, const BenchmarkProtocol& protocol);

    bool contains(const Signature& signature) const;
    std::size_t entry_count() const;

    /// Counters since this cache object was opened; loading a file does not
    /// count as hits.
    CacheStats stats() const;
    std::vector<CacheEvent> events() const;

    const std::string& path() const { return path_; }
    const std::string& fingerprint() const { return fingerprint_; }

private:
    void persist(const Signature& signature, double ms);
    void persist_event(const CacheEvent& event);

    mutable std::mutex mutex_;
    std::condition_variable in_flight_done_;
    std::set<Signature> in_flight_;
    std::unordered_map<Signature, double, SignatureHash> entries_;
    CacheStats stats_;
    std::vector<CacheEvent> events_;
    std::string path_;        // empty for in-memory caches
    std::string fingerprint_;
    std::int64_t session_ = 0;
};

/// Offline view of a cache file and its event log, for reporting without a
/// provider: entry count, fingerprint, and the recorded timeline.
struct CacheFileInfo {
    std::string fingerprint;
    std::int64_t entries = 0;
    std::int64_t hits = 0;
    std::int64_t misses = 0;
    // run index, sequence within run, hit flag, signature text, ms
    struct Row {
        std::int64_t run = 0;
        std::int64_t seq = 0;
        bool hit = false;
        std::string signature;
        double ms = 0.0;
    };
    std::vector<Row> timeline;
};

CacheFileInfo inspect_cache_file(const std::string& path);

}  // namespace archtree
