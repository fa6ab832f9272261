// Copyright (c) 2026 The archtree authors
// SPDX-License-Identifier: Apache-2.0

#include "latency/provider.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "core/error.hpp"
#include "graph/serialize.hpp"
#include "latency/subprocess.hpp"

namespace archtree {

using nlohmann::json;

void BenchmarkProtocol::validate() const {
    if (warmup_iters < 0) fail(ErrorCode::Argument, "warmup iterations must be non-negative");
    if (measure_iters < 1) fail(ErrorCode::Argument, "measure iterations must be positive");
}

json BenchmarkProtocol::to_json() const {
    return {{"warmup_iters", warmup_iters},
            {"measure_iters", measure_iters},
            {"aggregate", aggregate == Aggregate::Median ? "median" : "mean"}};
}

BenchmarkProtocol BenchmarkProtocol::from_json(const json& j) {
    BenchmarkProtocol p;
    p.warmup_iters = j.value("warmup_iters", p.warmup_iters);
    p.measure_iters = j.value("measure_iters", p.measure_iters);
    const auto agg = j.value("aggregate", std::string("median"));
    if (agg == "median")
        p.aggregate = Aggregate::Median;
    else if (agg == "mean")
        p.aggregate = Aggregate::Mean;
    else
        fail(ErrorCode::Argument, "unknown aggregate '" + agg + "'");
    p.validate();
    return p;
}

void AnalyticalParams::validate() const {
    if (align < 1) fail(ErrorCode::Argument, "align must be at least 1");
    if (slant < 0.0 || slant > 1.0) fail(ErrorCode::Argument, "slant must lie in [0, 1]");
    for (const auto& [kind, v] : cost_per_unit)
        if (v < 0.0) fail(ErrorCode::Argument, "cost coefficients must be non-negative");
    if (layer_overhead_ms < 0.0 || base_ms < 0.0)
        fail(ErrorCode::Argument, "overheads must be non-negative");
    if (noise_sigma < 0.0) fail(ErrorCode::Argument, "noise sigma must be non-negative");
}

json AnalyticalParams::to_json() const {
    return {{"align", align},
            {"slant", slant},
            {"cost_per_unit", cost_per_unit},
            {"layer_overhead_ms", layer_overhead_ms},
            {"base_ms", base_ms},
            {"noise_sigma", noise_sigma},
            {"noise_seed", noise_seed}};
}

AnalyticalParams AnalyticalParams::from_json(const json& j) {
    AnalyticalParams p;
    p.align = j.value("align", p.align);
    p.slant = j.value("slant", p.slant);
    if (j.contains("cost_per_unit"))
        p.cost_per_unit = j.at("cost_per_unit").get<std::map<std::string, double>>();
    p.layer_overhead_ms = j.value("layer_overhead_ms", p.layer_overhead_ms);
    p.base_ms = j.value("base_ms", p.base_ms);
    p.noise_sigma = j.value("noise_sigma", p.noise_sigma);
    p.noise_seed = j.value("noise_seed", p.noise_seed);
    p.validate();
    return p;
}

double analytical_latency_ms(const ModelGraph& model, const AnalyticalParams& params) {
    const auto shapes = propagate_shapes(model);
    const double a = static_cast<double>(params.align);
    double total = params.base_ms;
    for (const auto& l : model.layers) {
        if (!l.has_weights()) continue;
        std::int64_t c_out, c_in;
        double spatial_factor = 1.0;
        if (l.kind == LayerKind::Dense) {
            c_out = l.dense().out_features;
            c_in = l.dense().in_features;
        } else {
            c_out = l.conv().out_channels;
            c_in = l.conv().in_channels;
            const auto& out_shape = shapes.at(l.id);
            spatial_factor = static_cast<double>(out_shape.height * out_shape.width *
                                                 l.conv().kernel_h * l.conv().kernel_w);
        }
        const double ceil_out = std::ceil(static_cast<double>(c_out) / a);
        const double ceil_in = std::ceil(static_cast<double>(c_in) / a);
        const double work = (params.slant * static_cast<double>(c_out) * static_cast<double>(c_in) +
                             (1.0 - params.slant) * a * a * ceil_out * ceil_in) *
                            spatial_factor;
        auto cit = params.cost_per_unit.find(layer_kind_name(l.kind));
        const double kappa = cit == params.cost_per_unit.end() ? 0.0 : cit->second;
        total += params.layer_overhead_ms + kappa * work;
    }
    return total;
}

AnalyticalProvider::AnalyticalProvider(AnalyticalParams params)
    : params_(std::move(params)), noise_rng_(mix_seed(params_.noise_seed, 0x401u)) {
    params_.validate();
}

double AnalyticalProvider::measure_ms(const ModelGraph& model, const Signature& signature,
                                      const BenchmarkProtocol& protocol) {
    protocol.validate();
    const auto model_signature = build_channel_groups(model).signature();
    if (!(model_signature == signature))
        fail(ErrorCode::Argument, "signature " + signature.to_string() +
                                      " does not match the model's groups (" +
                                      model_signature.to_string() + ")");
    const double clean = analytical_latency_ms(model, params_);
    if (clean <= 0.0)
        fail(ErrorCode::Provider, "analytical latency is not positive; check the parameters");
    if (params_.noise_sigma == 0.0) return clean;

    std::vector<double> samples(static_cast<std::size_t>(protocol.measure_iters));
    for (auto& s : samples) {
        const double jitter = 1.0 + params_.noise_sigma * noise_rng_.gaussian();
        s = std::max(clean * jitter, clean * 1e-6);
    }
    if (protocol.aggregate == Aggregate::Mean) {
        double acc = 0.0;
        for (double s : samples) acc += s;
        return acc / static_cast<double>(samples.size());
    }
    std::sort(samples.begin(), samples.end());
    const std::size_t n = samples.size();
    return n % 2 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
}

json AnalyticalProvider::describe() const {
    return {{"kind", "analytical"}, {"params", params_.to_json()}};
}

ReplayProvider::ReplayProvider(std::map<Signature, double> table) : table_(std::move(table)) {}

ReplayProvider::ReplayProvider(const std::string& path) : path_(path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot open replay table '" + path + "'");
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json record;
        try {
            record = json::parse(line);
        } catch (const json::exception&) {
            fail(ErrorCode::Format, "replay table '" + path + "' line " +
                                        std::to_string(line_no) + " is not valid JSON");
        }
        if (record.contains("fingerprint")) continue;  // cache header line
        if (!record.contains("signature") || !record.contains("ms"))
            fail(ErrorCode::Format, "replay table '" + path + "' line " +
                                        std::to_string(line_no) + " is missing fields");
        Signature s{record.at("signature").get<std::vector<std::int64_t>>()};
        table_[std::move(s)] = record.at("ms").get<double>();
    }
}

double ReplayProvider::measure_ms(const ModelGraph&, const Signature& signature,
                                  const BenchmarkProtocol& protocol) {
    protocol.validate();
    auto it = table_.find(signature);
    if (it == table_.end())
        fail(ErrorCode::Unmeasured, "unmeasured signature " + signature.to_string());
    return it->second;
}

json ReplayProvider::describe() const {
    return {{"kind", "replay"}, {"path", path_}};
}

CommandProvider::CommandProvider(std::string command_template, double timeout_seconds)
    : template_(std::move(command_template)), timeout_seconds_(timeout_seconds) {
    if (template_.find("{model_path}") == std::string::npos)
        fail(ErrorCode::Argument, "command template must contain {model_path}");
    if (timeout_seconds_ <= 0.0) fail(ErrorCode::Argument, "timeout must be positive");
}

static std::string substitute(std::string s, const std::string& key, const std::string& value) {
    for (auto pos = s.find(key); pos != std::string::npos; pos = s.find(key, pos + value.size()))
        s.replace(pos, key.size(), value);
    return s;
}

double CommandProvider::measure_ms(const ModelGraph& model, const Signature&,
                                   const BenchmarkProtocol& protocol) {
    protocol.validate();
    namespace fs = std::filesystem;
    char dir_template[] = "/tmp/archtree-bench-XXXXXX";
    const char* dir = mkdtemp(dir_template);
    if (!dir) fail(ErrorCode::Io, "cannot create a temporary benchmark directory");
    const std::string manifest = std::string(dir) + "/model.json";
    struct Cleanup {
        std::string path;
        ~Cleanup() {
            std::error_code ec;
            fs::remove_all(path, ec);
        }
    } cleanup{dir};

    save_model(model, manifest);
    std::string command = substitute(template_, "{model_path}", manifest);
    command = substitute(command, "{warmup}", std::to_string(protocol.warmup_iters));
    command = substitute(command, "{iters}", std::to_string(protocol.measure_iters));

    const CommandResult result = run_command(command, timeout_seconds_);
    if (result.timed_out)
        fail(ErrorCode::Timeout, "benchmark command exceeded " +
                                     std::to_string(timeout_seconds_) + " s: " + command);
    if (result.exit_code != 0)
        fail(ErrorCode::Provider, "benchmark command exited with status " +
                                      std::to_string(result.exit_code) +
                                      (result.err.empty() ? "" : ": " + result.err));

    const char* begin = result.out.c_str();
    char* end = nullptr;
    const double ms = std::strtod(begin, &end);
    bool trailing_ok = end != begin;
    for (const char* p = end; trailing_ok && *p; ++p)
        if (!std::isspace(static_cast<unsigned char>(*p))) trailing_ok = false;
    if (!trailing_ok || !std::isfinite(ms))
        fail(ErrorCode::Provider, "benchmark command printed unparseable output: '" +
                                      result.out + "'");
    if (ms <= 0.0)
        fail(ErrorCode::Provider, "benchmark command reported a non-positive latency");
    return ms;
}

json CommandProvider::describe() const {
    return {{"kind", "command"}, {"template", template_}, {"timeout_s", timeout_seconds_}};
}

std::unique_ptr<LatencyProvider> make_provider(const json& spec) {
    const auto kind = spec.value("kind", std::string{});
    if (kind == "analytical")
        return std::make_unique<AnalyticalProvider>(
            AnalyticalParams::from_json(spec.value("params", json::object())));
    if (kind == "replay") {
        if (!spec.contains("path"))
            fail(ErrorCode::Argument, "replay provider spec needs a 'path'");
        return std::make_unique<ReplayProvider>(spec.at("path").get<std::string>());
    }
    if (kind == "command") {
        if (!spec.contains("template"))
            fail(ErrorCode::Argument, "command provider spec needs a 'template'");
        return std::make_unique<CommandProvider>(spec.at("template").get<std::string>(),
                                                 spec.value("timeout_s", 300.0));
    }
    fail(ErrorCode::Argument, "unknown provider kind '" + kind + "'");
}

}  // namespace archtree
