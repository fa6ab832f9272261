// Copyright (c) 2026 The archtree authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>

#include "doctest.h"

#include "core/error.hpp"
#include "importance/importance.hpp"
#include "support/builders.hpp"
#include "support/reference.hpp"

using namespace archtree;
using namespace archtree::testing;

TEST_CASE("accumulate: sums |w * g| across batches") {
    ModelGraph m;
    m.layers.push_back(input_layer("in", 1));
    m.layers.push_back(dense_layer(m, "fc", "in", 1, 1, false));
    m.layers.push_back(output_layer("out", "fc"));
    m.tensors.at("fc.weight").data = {2.0f};

    ImportanceState state = ImportanceState::for_model(m);
    accumulate(state, m, {{"fc.weight", {0.5f}}});
    accumulate(state, m, {{"fc.weight", {-1.0f}}});
    CHECK(state.per_weight.at("fc.weight")[0] == doctest::Approx(3.0));
    CHECK(state.batches == 2);

    // Zero weight contributes nothing regardless of the gradient.
    m.tensors.at("fc.weight").data = {0.0f};
    ImportanceState zero = ImportanceState::for_model(m);
    accumulate(zero, m, {{"fc.weight", {123.0f}}});
    CHECK(zero.per_weight.at("fc.weight")[0] == 0.0);
}

TEST_CASE("accumulate: matches |W .* g| with the finite-difference gradient") {
    const ModelGraph m = mlp(2, {2}, 2, 5);
    const Batch batch = batch_of({2, 2}, {0.3f, -0.8f, 1.1f, 0.4f}, {0, 1});

    auto [loss, grads] = loss_and_grads(m, batch);
    (void)loss;
    ImportanceState state = ImportanceState::for_model(m);
    accumulate(state, m, grads);

    const WeightMap fd = reference_fd_grads(m, batch, 1e-3);
    for (const auto& [name, acc] : state.per_weight) {
        const Tensor& w = m.tensors.at(name);
        for (std::size_t i = 0; i < acc.size(); ++i) {
            const double expected = std::abs(static_cast<double>(w.data[i]) * fd.at(name)[i]);
            CHECK(acc[i] == doctest::Approx(expected).epsilon(1e-3));
        }
    }
}

TEST_CASE("spatial_reduce: identity for dense, fold for conv") {
    const std::vector<double> dense = {1, 2, 3, 4};
    CHECK(spatial_reduce(dense, 2, 2, 1, Reduction::Sum) == dense);

    const std::vector<double> conv = {1, 2, 3, 4};  // one (o,i) pair, k=4
    CHECK(spatial_reduce(conv, 1, 1, 4, Reduction::Sum)[0] == doctest::Approx(10.0));
    CHECK(spatial_reduce(conv, 1, 1, 4, Reduction::LInf)[0] == doctest::Approx(4.0));
    CHECK(spatial_reduce(conv, 1, 1, 4, Reduction::Mean)[0] == doctest::Approx(2.5));
}

TEST_CASE("neural_reduce: row-wise for output ports, column-wise for input ports") {
    const std::vector<double> matrix = {1, 2, 3, 4};  // [[1,2],[3,4]]
    CHECK(neural_reduce(matrix, 2, 2, PortSide::Output, Reduction::LInf) ==
          std::vector<double>{2, 4});
    CHECK(neural_reduce(matrix, 2, 2, PortSide::Input, Reduction::Sum) ==
          std::vector<double>{4, 6});
    CHECK(neural_reduce(matrix, 2, 2, PortSide::Input, Reduction::Mean) ==
          std::vector<double>{2, 3});
}

TEST_CASE("group_reduce: elementwise across member vectors") {
    const std::vector<std::vector<double>> two = {{2, 4}, {3, 4}};
    CHECK(group_reduce(two, Reduction::Sum) == std::vector<double>{5, 8});
    CHECK(group_reduce(two, Reduction::LInf) == std::vector<double>{3, 4});
    CHECK(group_reduce({{7, 1}}, Reduction::Sum) == std::vector<double>{7, 1});
    CHECK_THROWS_AS(group_reduce({{1, 2}, {1}}, Reduction::Sum), Error);
}

TEST_CASE("select_channels: least important first, ties to the lower index") {
    CHECK(select_channels({0.5, 0.1, 0.9, 0.3}, 2) == std::set<std::int64_t>{1, 3});
    CHECK(select_channels({1.0, 1.0, 1.0}, 1) == std::set<std::int64_t>{0});
    CHECK(select_channels({0.5, 0.1, 0.9, 0.3}, 3) == std::set<std::int64_t>{0, 1, 3});
    CHECK_THROWS_AS(select_channels({1.0, 2.0}, 0), Error);
    CHECK_THROWS_AS(select_channels({1.0, 2.0}, 2), Error);
}

TEST_CASE("importance_loss: sum over the pruned channels") {
    const std::vector<double> v = {0.5, 0.1, 0.9, 0.3};
    CHECK(importance_loss(v, {1, 3}) == doctest::Approx(0.4));
    CHECK(importance_loss(v, {}) == 0.0);
    CHECK(importance_loss(v, {0, 1, 2, 3}) == doctest::Approx(1.8));
    CHECK_THROWS_AS(importance_loss(v, {9}), Error);
}

TEST_CASE("property: monotonicity and scale covariance") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> v(8);
        for (auto& x : v) x = rng.uniform(0.0, 5.0);

        std::set<std::int64_t> small = select_channels(v, 2);
        std::set<std::int64_t> big = select_channels(v, 5);
        CHECK(importance_loss(v, big) >= importance_loss(v, small));

        std::vector<double> scaled = v;
        const double lambda = rng.uniform(0.1, 10.0);
        for (auto& x : scaled) x *= lambda;
        CHECK(select_channels(scaled, 3) == select_channels(v, 3));
    }
}

TEST_CASE("property: select_channels minimizes the loss over all subsets") {
    Rng rng(23);
    for (std::int64_t n = 2; n <= 8; ++n) {
        std::vector<double> v(static_cast<std::size_t>(n));
        for (auto& x : v) x = rng.uniform(0.0, 1.0);
        for (std::int64_t count = 1; count < n; ++count) {
            const double chosen = importance_loss(v, select_channels(v, count));
            // Exhaustive subsets via bitmask.
            double best = 1e300;
            for (std::int64_t mask = 0; mask < (1 << n); ++mask) {
                if (std::popcount(static_cast<unsigned>(mask)) != count) continue;
                std::set<std::int64_t> subset;
                for (std::int64_t b = 0; b < n; ++b)
                    if (mask & (1 << b)) subset.insert(b);
                best = std::min(best, importance_loss(v, subset));
            }
            CHECK(chosen == doctest::Approx(best).epsilon(1e-12));
        }
    }
}

namespace {

/// Direct channel-grouped summation of |W .* g|: the oracle for the
/// all-Sum reduction pipeline.
std::vector<std::vector<double>> direct_grouped_sum(const ModelGraph& m, const GroupSet& groups,
                                                    const ImportanceState& state) {
    std::vector<std::vector<double>> out(groups.size());
    for (const auto& g : groups.groups) {
        auto& vec = out[static_cast<std::size_t>(g.index)];
        vec.assign(static_cast<std::size_t>(g.channel_count), 0.0);
        for (const auto& member : g.members) {
            const Layer* l = m.find_layer(member.layer_id);
            if (!l || !l->has_weights()) continue;
            const auto& acc = state.per_weight.at(l->weights.at("weight"));
            std::int64_t o, i, k;
            if (l->kind == LayerKind::Dense) {
                o = l->dense().out_features;
                i = l->dense().in_features;
                k = 1;
            } else {
                o = l->conv().out_channels;
                i = l->conv().in_channels;
                k = l->conv().kernel_h * l->conv().kernel_w;
            }
            for (std::int64_t oo = 0; oo < o; ++oo)
                for (std::int64_t ii = 0; ii < i; ++ii)
                    for (std::int64_t kk = 0; kk < k; ++kk) {
                        const double v = acc[static_cast<std::size_t>((oo * i + ii) * k + kk)];
                        const std::int64_t channel =
                            member.side == PortSide::Output ? oo : ii / member.multiplicity;
                        vec[static_cast<std::size_t>(channel)] += v;
                    }
        }
    }
    return out;
}

}  // namespace

TEST_CASE("property: all-Sum pipeline equals direct channel-grouped summation") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        for (const ModelGraph& m :
             {mlp(5, {7, 6}, 3, seed), resnet_classifier(true, 3, 5, 6, 5, 3, seed),
              conv_flatten_net(2, 4, 6, 3, seed)}) {
            const GroupSet groups = build_channel_groups(m);
            Rng rng(seed * 91 + 5);
            const Batch batch = random_batch(m, 3, 3, rng);
            auto [loss, grads] = loss_and_grads(m, batch);
            (void)loss;
            ImportanceState state = ImportanceState::for_model(m);
            accumulate(state, m, grads);

            const ReductionConfig all_sum{Reduction::Sum, Reduction::Sum, Reduction::Sum};
            const GroupImportance pipeline = compute_group_importance(m, groups, state, all_sum);
            const auto direct = direct_grouped_sum(m, groups, state);
            REQUIRE(pipeline.per_group.size() == direct.size());
            for (std::size_t g = 0; g < direct.size(); ++g) {
                REQUIRE(pipeline.per_group[g].size() == direct[g].size());
                for (std::size_t c = 0; c < direct[g].size(); ++c) {
                    CHECK(pipeline.per_group[g][c] ==
                          doctest::Approx(direct[g][c]).epsilon(1e-6));
                    CHECK(pipeline.per_group[g][c] >= 0.0);
                }
            }
        }
    }
}

TEST_CASE("default reductions: (sum, linf, sum) pipeline stays non-negative") {
    const ModelGraph m = resnet_classifier(true, 3, 5, 6, 5, 3, 2);
    const GroupSet groups = build_channel_groups(m);
    Rng rng(77);
    const Batch batch = random_batch(m, 4, 3, rng);
    auto [loss, grads] = loss_and_grads(m, batch);
    (void)loss;
    ImportanceState state = ImportanceState::for_model(m);
    accumulate(state, m, grads);
    const GroupImportance gi = compute_group_importance(m, groups, state, ReductionConfig{});
    for (const auto& vec : gi.per_group)
        for (const double v : vec) CHECK(v >= 0.0);
}

TEST_CASE("importance import/export round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "archtree_test_importance";
    std::filesystem::create_directories(dir);
    const ModelGraph m = mlp(4, {6}, 3, 9);
    Rng rng(15);
    const Batch batch = random_batch(m, 3, 3, rng);
    auto [loss, grads] = loss_and_grads(m, batch);
    (void)loss;
    ImportanceState state = ImportanceState::for_model(m);
    accumulate(state, m, grads);

    const std::string manifest = (dir / "imp.json").string();
    save_importance(m, state, manifest);
    const ImportanceState loaded = load_importance(m, manifest);
    CHECK(loaded.batches == state.batches);
    for (const auto& [name, acc] : state.per_weight) {
        const auto& other = loaded.per_weight.at(name);
        REQUIRE(other.size() == acc.size());
        for (std::size_t i = 0; i < acc.size(); ++i)
            CHECK(other[i] == doctest::Approx(acc[i]).epsilon(1e-6));
    }
}
