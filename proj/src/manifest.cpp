#include "moeprune/manifest.hpp"

#include "moeprune/error.hpp"

#include <algorithm>

namespace moeprune {

void validate(const ModelSpec& spec) {
    if (spec.num_layers < 1) throw ValueError("model spec: num_layers must be positive");
    if (spec.num_routed_experts < 2) throw ValueError("model spec: need at least 2 routed experts");
    if (spec.experts_per_token < 1 || spec.experts_per_token > spec.num_routed_experts)
        throw ValueError("model spec: experts_per_token outside [1, num_routed_experts]");
    if (spec.hidden_dim < 1 || spec.expert_dim < 1)
        throw ValueError("model spec: dimensions must be positive");
    if (spec.matrices_per_expert < 2)
        throw ValueError("model spec: matrices_per_expert must be at least 2");
    if (spec.non_expert_params < 0) throw ValueError("model spec: negative non_expert_params");
}

std::int64_t params_per_expert(const ModelSpec& spec) {
    const std::int64_t d = spec.hidden_dim, f = spec.expert_dim;
    std::int64_t p = spec.matrices_per_expert * d * f;
    // Input projections carry d_ff biases each, the output projection d.
    if (spec.expert_biases) p += (spec.matrices_per_expert - 1) * f + d;
    return p;
}

std::int64_t total_params(const ModelSpec& spec) {
    return spec.non_expert_params + params_per_expert(spec) *
                                        static_cast<std::int64_t>(spec.num_layers) *
                                        spec.num_routed_experts;
}

CompiledManifest build_manifest(const ModelSpec& spec, const ExpertSelection& selection) {
    validate(spec);
    if (selection.num_layers != spec.num_layers ||
        selection.num_experts != spec.num_routed_experts)
        throw ShapeError("selection is " + std::to_string(selection.num_layers) + "x" +
                         std::to_string(selection.num_experts) + ", model is " +
                         std::to_string(spec.num_layers) + "x" +
                         std::to_string(spec.num_routed_experts));
    validate(selection);

    CompiledManifest m;
    m.model_spec = spec;
    m.selection = selection;
    for (const auto& keep : selection.keep) {
        std::vector<int> remap(static_cast<std::size_t>(spec.num_routed_experts), -1);
        for (std::size_t j = 0; j < keep.size(); ++j)
            remap[static_cast<std::size_t>(keep[j])] = static_cast<int>(j);
        m.remap.push_back(std::move(remap));
        m.router_rows_kept.push_back(keep);
        m.effective_k.push_back(std::min(spec.experts_per_token, static_cast<int>(keep.size())));
    }
    m.sparsity = sparsity_report(selection);
    m.expert_params_kept = params_per_expert(spec) * m.sparsity.kept_total;
    m.total_params_kept = spec.non_expert_params + m.expert_params_kept;
    return m;
}

double memory_estimate(const CompiledManifest& manifest, double bytes_per_param) {
    return static_cast<double>(manifest.total_params_kept) * bytes_per_param;
}

}  // namespace moeprune
