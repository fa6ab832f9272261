// Copyright (c) 2026 The archtree authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "exec/executor.hpp"
#include "graph/groups.hpp"
#include "graph/model.hpp"

namespace archtree {

enum class Reduction { Sum, Mean, LInf };

const char* reduction_name(Reduction r);
Reduction reduction_from_name(const std::string& name);

/// Spatial, neural and channel-group reduction operators. The default is the
/// strongest combination found in ablation: (Sum, LInf, Sum).
struct ReductionConfig {
    Reduction spatial = Reduction::Sum;
    Reduction neural = Reduction::LInf;
    Reduction group = Reduction::Sum;
};

/// Per-weight accumulators of |W * dL/dW|, one per prunable layer's weight
/// tensor, plus the number of batches folded in. Accumulation runs in f64.
struct ImportanceState {
    std::map<std::string, std::vector<double>> per_weight;  // tensor name -> |W.g| sums
    std::int64_t batches = 0;

    static ImportanceState for_model(const ModelGraph& model);
};

/// state += |W (.) grad| elementwise, where grad is one batch's mean-loss
/// gradient. Bias tensors never contribute.
void accumulate(ImportanceState& state, const ModelGraph& model, const GradientStore& grads);

/// (o, i, k) importance tensor reduced over its k spatial positions to an
/// o x i matrix; identity for dense layers (k == 1).
std::vector<double> spatial_reduce(const std::vector<double>& tensor, std::int64_t out_dim,
                                   std::int64_t in_dim, std::int64_t spatial, Reduction r);

/// o x i matrix reduced row-wise for the output port (length o) or
/// column-wise for the input port (length i).
std::vector<double> neural_reduce(const std::vector<double>& matrix, std::int64_t out_dim,
                                  std::int64_t in_dim, PortSide port, Reduction r);

/// Elementwise reduction across the member-port vectors of one group.
std::vector<double> group_reduce(const std::vector<std::vector<double>>& vectors, Reduction r);

/// Per-group channel importance vectors, indexed like the group set.
struct GroupImportance {
    std::vector<std::vector<double>> per_group;
};

/// Full pipeline: spatial -> neural per member port, then the group
/// reduction. Ports whose layer owns no weights contribute nothing.
GroupImportance compute_group_importance(const ModelGraph& model, const GroupSet& groups,
                                         const ImportanceState& state,
                                         const ReductionConfig& config);

/// The `count` least important channels; ties break toward the lower index.
std::set<std::int64_t> select_channels(const std::vector<double>& importance,
                                       std::int64_t count);

/// Sum of the pruned channels' importance: the child loss proxy.
double importance_loss(const std::vector<double>& importance,
                       const std::set<std::int64_t>& pruned);

/// Import/export in the model container format: JSON index plus raw f32
/// blobs, keyed by layer id. Lets externally computed importances drive the
/// search.
void save_importance(const ModelGraph& model, const ImportanceState& state,
                     const std::string& manifest_path, const std::string& blob_path = "");
ImportanceState load_importance(const ModelGraph& model, const std::string& manifest_path,
                                const std::string& blob_path = "");

}  // namespace archtree
