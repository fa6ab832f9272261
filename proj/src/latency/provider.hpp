// Copyright (c) 2026 The archtree authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "core/rng.hpp"
#include "graph/groups.hpp"
#include "graph/model.hpp"

namespace archtree {

enum class Aggregate { Median, Mean };

/// Iteration scheme for one latency measurement. Exploration defaults to the
/// median of 300 iterations after 100 warm-up iterations; final reporting to
/// the mean of 10^4 after 10^3.
struct BenchmarkProtocol {
    std::int64_t warmup_iters = 100;
    std::int64_t measure_iters = 300;
    Aggregate aggregate = Aggregate::Median;

    static BenchmarkProtocol exploration() { return {100, 300, Aggregate::Median}; }
    static BenchmarkProtocol final_grade() { return {1000, 10000, Aggregate::Mean}; }

    void validate() const;
    nlohmann::json to_json() const;
    static BenchmarkProtocol from_json(const nlohmann::json& j);
};

/// Latency oracle. Implementations must return a strictly positive number of
/// milliseconds and be deterministic for a fixed provider state and
/// signature; the cache is only sound under that contract. Calls are not
/// thread-safe: a measurement backend is exclusive, so callers serialize.
class LatencyProvider {
public:
    virtual ~LatencyProvider() = default;

    virtual double measure_ms(const ModelGraph& model, const Signature& signature,
                              const BenchmarkProtocol& protocol) = 0;

    /// Stable description of the provider configuration, folded into cache
    /// fingerprints.
    virtual nlohmann::json describe() const = 0;
};

/// Cost-model parameters. Work per prunable layer combines a linear term and
/// an alignment ceiling term so the channels-to-latency curve is a staircase
/// with slanted steps:
///   work = (slant*c_out*c_in + (1-slant)*align^2*ceil(c_out/align)*ceil(c_in/align)) * spatial
/// where spatial is H_out*W_out*k_h*k_w for convolutions and 1 for dense.
struct AnalyticalParams {
    std::int64_t align = 8;
    double slant = 0.2;
    std::map<std::string, double> cost_per_unit = {{"Dense", 1e-5}, {"Conv2d", 1e-5}};
    double layer_overhead_ms = 0.001;
    double base_ms = 0.01;
    // Zero-mean multiplicative noise for robustness experiments; off by
    // default and in every acceptance run (it breaks provider determinism).
    double noise_sigma = 0.0;
    std::uint64_t noise_seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
    static AnalyticalParams from_json(const nlohmann::json& j);
};

class AnalyticalProvider : public LatencyProvider {
public:
    explicit AnalyticalProvider(AnalyticalParams params = {});

    double measure_ms(const ModelGraph& model, const Signature& signature,
                      const BenchmarkProtocol& protocol) override;
    nlohmann::json describe() const override;

    const AnalyticalParams& params() const { return params_; }

private:
    AnalyticalParams params_;
    Rng noise_rng_;
};

/// Deterministic cost of one model under the analytical parameters.
double analytical_latency_ms(const ModelGraph& model, const AnalyticalParams& params);

/// Answers only from recorded whole-model measurements; a miss is an
/// explicit error, never an interpolation.
class ReplayProvider : public LatencyProvider {
public:
    /// Loads "{\"signature\":[...],\"ms\":...}" JSON lines; a fingerprint
    /// header line (as written by the cache) is skipped, so cache files can
    /// be replayed directly.
    explicit ReplayProvider(const std::string& path);
    explicit ReplayProvider(std::map<Signature, double> table);

    double measure_ms(const ModelGraph& model, const Signature& signature,
                      const BenchmarkProtocol& protocol) override;
    nlohmann::json describe() const override;

    std::size_t size() const { return table_.size(); }

private:
    std::map<Signature, double> table_;
    std::string path_;
};

/// Runs a user command per measurement, exchanging whole serialized models.
/// The template must contain {model_path} and may contain {warmup} and
/// {iters}; stdout must carry a single positive decimal (milliseconds).
class CommandProvider : public LatencyProvider {
public:
    explicit CommandProvider(std::string command_template, double timeout_seconds = 300.0);

    double measure_ms(const ModelGraph& model, const Signature& signature,
                      const BenchmarkProtocol& protocol) override;
    nlohmann::json describe() const override;

private:
    std::string template_;
    double timeout_seconds_;
};

/// Factory from a spec object: {"kind":"analytical","params":{...}} |
/// {"kind":"replay","path":"..."} | {"kind":"command","template":"...",
/// "timeout_s":300}.
std::unique_ptr<LatencyProvider> make_provider(const nlohmann::json& spec);

}  // namespace archtree
