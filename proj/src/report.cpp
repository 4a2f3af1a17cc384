#include "moeprune/report.hpp"

#include "moeprune/io.hpp"
#include "moeprune/manifest.hpp"
#include "moeprune/patterns.hpp"

namespace moeprune {

std::vector<SweepRow> sparsity_sweep(const ToyMoeModel& model, const ComputationalPattern& pattern,
                                     const std::string& ranker, const std::vector<int>& budgets,
                                     const std::vector<Eigen::VectorXd>& inputs, int domain) {
    const ModelSpec spec = toy_model_spec(model.spec);
    std::vector<SweepRow> rows;
    for (int b : budgets) {
        const auto m = build_manifest(spec, select_specialist(pattern.scores, b));
        rows.push_back({b, m.sparsity.sparsity, ranker, evaluate(model, m, inputs, domain),
                        m.total_params_kept});
    }
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::string out = "budget,sparsity,ranker,relative_error,cosine,miss_rate,recovery,params_kept\n";
    for (const auto& r : rows) {
        out += std::to_string(r.budget) + ',' + format_number(r.sparsity) + ',' + r.ranker + ',' +
               format_number(r.report.relative_error) + ',' + format_number(r.report.cosine) + ',' +
               format_number(r.report.miss_rate) + ',' + format_number(r.report.recovery) + ',' +
               std::to_string(r.params_kept) + '\n';
    }
    return out;
}

std::string overlap_csv(const std::vector<std::pair<int, double>>& curve) {
    std::string out = "k,overlap\n";
    for (const auto& [k, v] : curve) out += std::to_string(k) + ',' + format_number(v) + '\n';
    return out;
}

std::string heatmap_csv(const ComputationalPattern& pattern) {
    std::string out = "layer";
    for (int i = 0; i < pattern.num_experts(); ++i) out += ",e" + std::to_string(i);
    out += '\n';
    for (int l = 0; l < pattern.num_layers(); ++l) {
        out += std::to_string(l);
        for (int i = 0; i < pattern.num_experts(); ++i)
            out += ',' + format_number(pattern.scores(l, i));
        out += '\n';
    }
    return out;
}

}  // namespace moeprune
