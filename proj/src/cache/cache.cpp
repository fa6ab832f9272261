// Copyright (c) 2026 The archtree authors
// SPDX-License-Identifier: Apache-2.0

#include "cache/cache.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "core/error.hpp"
#include "graph/serialize.hpp"

namespace archtree {

using nlohmann::json;

static std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string cache_fingerprint(const ModelGraph& root_model, const json& provider_desc) {
    return fnv1a_hex(model_manifest(root_model).dump() + "|" + provider_desc.dump());
}

std::string cache_fingerprint(const ModelGraph& root_model, const LatencyProvider& provider) {
    return cache_fingerprint(root_model, provider.describe());
}

LatencyCache::LatencyCache() = default;

static std::string events_path_of(const std::string& cache_path) {
    return cache_path + ".events.csv";
}

LatencyCache::LatencyCache(const std::string& path, const std::string& fingerprint)
    : path_(path), fingerprint_(fingerprint) {
    std::ifstream in(path_);
    if (in) {
        std::string line;
        if (!std::getline(in, line))
            fail(ErrorCode::Format, "cache file '" + path_ + "' is empty, expected a header");
        json header;
        try {
            header = json::parse(line);
        } catch (const json::exception&) {
            fail(ErrorCode::Format, "cache file '" + path_ + "' has a malformed header");
        }
        const auto stored = header.value("fingerprint", std::string{});
        if (stored != fingerprint_)
            fail(ErrorCode::Fingerprint, "cache file '" + path_ +
                                             "' belongs to a different model/provider pair (" +
                                             stored + " vs " + fingerprint_ + ")");
        std::size_t line_no = 1;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            json record;
            try {
                record = json::parse(line);
                Signature s{record.at("signature").get<std::vector<std::int64_t>>()};
                entries_[std::move(s)] = record.at("ms").get<double>();
            } catch (const json::exception&) {
                // A torn final line (crash mid-append) is dropped; anything
                // before it stays valid.
                if (in.peek() != EOF)
                    fail(ErrorCode::Format, "cache file '" + path_ + "' line " +
                                                std::to_string(line_no) + " is corrupt");
            }
        }
    } else {
        std::ofstream out(path_);
        if (!out) fail(ErrorCode::Io, "cannot create cache file '" + path_ + "'");
        out << json{{"fingerprint", fingerprint_}}.dump() << "\n";
    }

    // Session index for the event log: one past the last recorded run.
    const std::string epath = events_path_of(path_);
    std::ifstream ev(epath);
    if (ev) {
        std::string line;
        std::getline(ev, line);  // fingerprint comment
        std::getline(ev, line);  // header
        while (std::getline(ev, line)) {
            const auto comma = line.find(',');
            if (comma == std::string::npos) continue;
            std::int64_t run = 0;
            auto res = std::from_chars(line.data(), line.data() + comma, run);
            if (res.ec == std::errc{}) session_ = std::max(session_, run + 1);
        }
    } else {
        std::ofstream out(epath);
        if (!out) fail(ErrorCode::Io, "cannot create event log '" + epath + "'");
        out << "# fingerprint=" << fingerprint_ << "\n";
        out << "run,seq,hit,signature,ms\n";
    }
}

bool LatencyCache::contains(const Signature& signature) const {
    std::lock_guard lock(mutex_);
    return entries_.count(signature) > 0;
}

std::size_t LatencyCache::entry_count() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

CacheStats LatencyCache::stats() const {
    std::lock_guard lock(mutex_);
    return stats_;
}

std::vector<CacheEvent> LatencyCache::events() const {
    std::lock_guard lock(mutex_);
    return events_;
}

void LatencyCache::persist(const Signature& signature, double ms) {
    if (path_.empty()) return;
    std::ofstream out(path_, std::ios::app);
    if (!out) fail(ErrorCode::Io, "cannot append to cache file '" + path_ + "'");
    out << json{{"signature", signature.counts}, {"ms", ms}}.dump() << "\n";
    out.flush();
}

void LatencyCache::persist_event(const CacheEvent& event) {
    if (path_.empty()) return;
    std::ofstream out(events_path_of(path_), std::ios::app);
    if (!out) return;  // the event log is advisory, never fatal
    char ms_buf[32];
    std::snprintf(ms_buf, sizeof(ms_buf), "%.9g", event.ms);
    out << session_ << "," << (events_.size() - 1) << "," << (event.hit ? 1 : 0) << ","
        << event.signature.to_string() << "," << ms_buf << "\n";
}

double LatencyCache::get_or_measure(const Signature& signature,
                                    const std::function<double()>& measure) {
    std::unique_lock lock(mutex_);
    for (;;) {
        auto it = entries_.find(signature);
        if (it != entries_.end()) {
            ++stats_.hits;
            events_.push_back({signature, true, it->second});
            persist_event(events_.back());
            return it->second;
        }
        if (!in_flight_.count(signature)) break;
        // Someone else is measuring this signature; their result becomes our
        // hit once it lands.
        in_flight_done_.wait(lock);
    }

    in_flight_.insert(signature);
    lock.unlock();
    double ms = 0.0;
    try {
        ms = measure();
    } catch (...) {
        lock.lock();
        in_flight_.erase(signature);
        in_flight_done_.notify_all();
        throw;  // the failed signature is not stored
    }
    lock.lock();
    entries_[signature] = ms;
    ++stats_.misses;
    events_.push_back({signature, false, ms});
    persist(signature, ms);
    persist_event(events_.back());
    in_flight_.erase(signature);
    in_flight_done_.notify_all();
    return ms;
}

double LatencyCache::get_or_measure(LatencyProvider& provider, const ModelGraph& model,
                                    const Signature& signature,
                                    const BenchmarkProtocol& protocol) {
    return get_or_measure(signature,
                          [&] { return provider.measure_ms(model, signature, protocol); });
}

CacheFileInfo inspect_cache_file(const std::string& path) {
    CacheFileInfo info;
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot open cache file '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) fail(ErrorCode::Format, "cache file '" + path + "' is empty");
    try {
        info.fingerprint = json::parse(line).value("fingerprint", std::string{});
    } catch (const json::exception&) {
        fail(ErrorCode::Format, "cache file '" + path + "' has a malformed header");
    }
    while (std::getline(in, line))
        if (line.find_first_not_of(" \t\r") != std::string::npos) ++info.entries;

    std::ifstream ev(events_path_of(path));
    if (!ev) return info;  // no recorded runs yet
    std::string header;
    if (std::getline(ev, header) && header.rfind("# fingerprint=", 0) == 0) {
        const auto stored = header.substr(std::string("# fingerprint=").size());
        if (stored != info.fingerprint)
            fail(ErrorCode::Fingerprint,
                 "event log does not belong to cache file '" + path + "'");
    }
    std::getline(ev, header);  // column names
    while (std::getline(ev, line)) {
        std::stringstream ss(line);
        std::string run, seq, hit, sig, ms;
        if (!std::getline(ss, run, ',') || !std::getline(ss, seq, ',') ||
            !std::getline(ss, hit, ',') || !std::getline(ss, sig, ',') || !std::getline(ss, ms))
            continue;
        CacheFileInfo::Row row;
        row.run = std::strtoll(run.c_str(), nullptr, 10);
        row.seq = std::strtoll(seq.c_str(), nullptr, 10);
        row.hit = hit == "1";
        row.signature = sig;
        row.ms = std::strtod(ms.c_str(), nullptr);
        (row.hit ? info.hits : info.misses)++;
        info.timeline.push_back(std::move(row));
    }
    return info;
}

}  // namespace archtree
