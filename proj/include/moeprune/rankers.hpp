#pragma once

#include "moeprune/peu.hpp"
#include "moeprune/trace.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>

namespace moeprune {

struct RankerKind {
    enum class Kind { Peu, Frequency, AllLogits, ActLogits, Random, LastPeu };
    Kind kind = Kind::Peu;
    PeuConfig peu;             // Peu, LastPeu
    int k_act = 8;             // Frequency, ActLogits
    std::uint64_t seed = 0;    // Random
};

std::string to_string(RankerKind::Kind k);
RankerKind::Kind parse_ranker(const std::string& s);

Eigen::MatrixXd frequency_scores(const RouterTrace& trace, int k_act);
Eigen::MatrixXd all_logits_scores(const RouterTrace& trace);
Eigen::MatrixXd act_logits_scores(const RouterTrace& trace, int k_act);
// Row-major fill from SplitMix64(seed).uniform().
Eigen::MatrixXd random_scores(int num_layers, int num_experts, std::uint64_t seed);
// PEU scores negated so that top-ranked selection keeps the bottom experts.
Eigen::MatrixXd last_peu_scores(const RouterTrace& trace, const PeuConfig& config);

// Scores the trace with any ranker. Thresholds are filled for PEU rankers and
// zero otherwise.
ComputationalPattern score_trace(const RouterTrace& trace, const RankerKind& ranker);

}  // namespace moeprune
