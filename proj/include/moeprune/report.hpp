#pragma once

#include "moeprune/peu.hpp"
#include "moeprune/toymoe.hpp"

#include <string>
#include <utility>
#include <vector>

namespace moeprune {

struct SweepRow {
    int budget = 0;  // experts kept per layer
    double sparsity = 0.0;
    std::string ranker;
    EvalReport report;
    std::int64_t params_kept = 0;
};

// Specialist selections at each per-layer budget, evaluated on the inputs.
std::vector<SweepRow> sparsity_sweep(const ToyMoeModel& model, const ComputationalPattern& pattern,
                                     const std::string& ranker, const std::vector<int>& budgets,
                                     const std::vector<Eigen::VectorXd>& inputs, int domain);

// CSV with a header row, '.' decimals and LF line endings.
std::string sweep_csv(const std::vector<SweepRow>& rows);
std::string overlap_csv(const std::vector<std::pair<int, double>>& curve);
// One row per layer, one column per expert.
std::string heatmap_csv(const ComputationalPattern& pattern);

}  // namespace moeprune
