#pragma once

#include "moeprune/peu.hpp"
#include "moeprune/trace.hpp"

#include <Eigen/Core>

#include <string>
#include <utility>
#include <vector>

namespace moeprune {

struct ExpertSelection {
    int num_layers = 0;
    int num_experts = 0;
    std::vector<std::vector<int>> keep;  // per layer, ascending
    std::string strategy_tag;
    std::vector<std::string> source_pattern_ids;

    bool operator==(const ExpertSelection&) const = default;
};

struct SparsityReport {
    std::int64_t kept_total = 0;
    std::int64_t total = 0;
    double sparsity = 0.0;
    std::vector<int> per_layer_counts;

    bool operator==(const SparsityReport&) const = default;
};

// Throws if indices are out of range, duplicated, unsorted, or a layer is empty.
void validate(const ExpertSelection& sel);

ExpertSelection keep_all(int num_layers, int num_experts);

ExpertSelection select_specialist(const Eigen::MatrixXd& scores, int m);
ExpertSelection select_last(const Eigen::MatrixXd& scores, int m);
ExpertSelection select_global(const Eigen::MatrixXd& scores, std::int64_t total_budget);

enum class GeneralistThresholds {
    Blended,    // recomputed on the concatenated token stream
    PerDomain,  // each trace filtered with its own adaptive thresholds
};

ComputationalPattern synthesize_generalist(
    const std::vector<RouterTrace>& traces, const PeuConfig& config,
    GeneralistThresholds mode = GeneralistThresholds::Blended);

ExpertSelection trivial_union(const std::vector<ExpertSelection>& selections);

// For each k: mean over layers of |topk(A) ∩ topk(B)| / k.
std::vector<std::pair<int, double>> overlap_curve(const Eigen::MatrixXd& a,
                                                  const Eigen::MatrixXd& b,
                                                  const std::vector<int>& ks);

SparsityReport sparsity_report(const ExpertSelection& sel);

}  // namespace moeprune
