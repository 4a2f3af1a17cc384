#pragma once

#include "moeprune/patterns.hpp"

#include <cstdint>
#include <vector>

namespace moeprune {

struct ModelSpec {
    int num_layers = 0;
    int num_routed_experts = 0;
    int experts_per_token = 0;  // K
    std::int64_t hidden_dim = 0;
    std::int64_t expert_dim = 0;
    // 2 for a plain d -> d_ff -> d block, 3 for gated (SwiGLU-style) experts.
    int matrices_per_expert = 2;
    bool expert_biases = false;
    std::int64_t non_expert_params = 0;

    bool operator==(const ModelSpec&) const = default;
};

void validate(const ModelSpec& spec);

// matrices_per_expert * d * d_ff, plus d_ff + d bias terms per projection
// pair when biases are enabled.
std::int64_t params_per_expert(const ModelSpec& spec);
std::int64_t total_params(const ModelSpec& spec);

struct CompiledManifest {
    ModelSpec model_spec;
    ExpertSelection selection;
    std::vector<std::vector<int>> router_rows_kept;  // [l][new] = old
    std::vector<std::vector<int>> remap;  // remap[l][old] = new, or -1 when pruned
    std::vector<int> effective_k;
    SparsityReport sparsity;
    std::int64_t expert_params_kept = 0;
    std::int64_t total_params_kept = 0;

    bool operator==(const CompiledManifest&) const = default;
};

CompiledManifest build_manifest(const ModelSpec& spec, const ExpertSelection& selection);

double memory_estimate(const CompiledManifest& manifest, double bytes_per_param);

}  // namespace moeprune
