#pragma once

#include "moeprune/error.hpp"
#include "moeprune/trace.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace moeprune {

enum class TransformKind { Raw, Sigmoid, Rectifier, Exp };

struct ThresholdMode {
    enum class Kind { Adaptive, Fixed, None };
    Kind kind = Kind::Adaptive;
    double r = 0.0;  // used by Fixed only

    static ThresholdMode adaptive() { return {Kind::Adaptive, 0.0}; }
    static ThresholdMode fixed(double r) { return {Kind::Fixed, r}; }
    static ThresholdMode none() { return {Kind::None, 0.0}; }
    bool operator==(const ThresholdMode&) const = default;
};

struct PeuConfig {
    int k_a = 8;
    TransformKind transform = TransformKind::Rectifier;
    ThresholdMode threshold = ThresholdMode::adaptive();
    bool operator==(const PeuConfig&) const = default;
};

struct ComputationalPattern {
    std::string model_id;
    std::string domain_tag;
    std::int64_t token_count = 0;
    PeuConfig config;
    Eigen::VectorXd thresholds;  // length L
    Eigen::MatrixXd scores;      // L x N_r

    int num_layers() const { return static_cast<int>(scores.rows()); }
    int num_experts() const { return static_cast<int>(scores.cols()); }
};

std::string to_string(TransformKind k);
TransformKind parse_transform(const std::string& s);
std::string to_string(ThresholdMode::Kind k);
ThresholdMode::Kind parse_threshold_kind(const std::string& s);

// Throws ArgumentError if k_a or the fixed threshold is out of range.
void validate(const PeuConfig& config, int num_experts);

template <class T>
T sigmoid(T s) {
    if (s >= T(0)) return T(1) / (T(1) + std::exp(-s));
    const T e = std::exp(s);
    return e / (T(1) + e);
}

template <class T>
T transform(T s, TransformKind kind) {
    switch (kind) {
        case TransformKind::Raw:
            return s;
        case TransformKind::Sigmoid:
            return sigmoid(s);
        case TransformKind::Rectifier:
            return std::max(s, sigmoid(s));
        case TransformKind::Exp: {
            const T e = std::exp(s);
            return std::isinf(e) ? std::numeric_limits<T>::max() : e;
        }
    }
    return s;
}

// Indices of the k largest entries, descending by value, ties to the lower index.
template <class Derived>
std::vector<Eigen::Index> topk_pool(const Eigen::DenseBase<Derived>& logits, Eigen::Index k) {
    const Eigen::Index n = logits.size();
    if (k < 1 || k > n)
        throw ArgumentError("pool size " + std::to_string(k) + " outside [1, " +
                            std::to_string(n) + "]");
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    const auto& v = logits.derived();
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(),
                      [&](Eigen::Index a, Eigen::Index b) {
                          const auto va = v(a), vb = v(b);
                          return va > vb || (va == vb && a < b);
                      });
    idx.resize(static_cast<std::size_t>(k));
    return idx;
}

// Softmax restricted to the pool; entry j is the probability of pool[j].
template <class Derived>
Eigen::VectorXd local_softmax(const Eigen::DenseBase<Derived>& logits,
                              const std::vector<Eigen::Index>& pool) {
    if (pool.empty()) throw ArgumentError("local_softmax needs a non-empty pool");
    const auto& v = logits.derived();
    const Eigen::Index k = static_cast<Eigen::Index>(pool.size());
    Eigen::VectorXd s(k);
    for (Eigen::Index j = 0; j < k; ++j) s(j) = static_cast<double>(v(pool[j]));
    Eigen::VectorXd e = (s.array() - s.maxCoeff()).exp();
    return e / e.sum();
}

// Filtered, transformed score for every expert of one token at one layer.
template <class Derived>
Eigen::VectorXd token_scores(const Eigen::DenseBase<Derived>& logits, const PeuConfig& config,
                             double r) {
    const auto& v = logits.derived();
    const auto pool = topk_pool(v, config.k_a);
    const Eigen::VectorXd p = local_softmax(v, pool);
    const bool filter = config.threshold.kind != ThresholdMode::Kind::None;
    Eigen::VectorXd out = Eigen::VectorXd::Zero(v.size());
    for (std::size_t j = 0; j < pool.size(); ++j) {
        if (filter && !(p(static_cast<Eigen::Index>(j)) >= r)) continue;
        out(pool[j]) = transform(static_cast<double>(v(pool[j])), config.transform);
    }
    return out;
}

// Largest pool probability; equals 1 / sum_j exp(s_j - s_max) over the pool.
template <class Derived>
double max_pool_probability(const Eigen::DenseBase<Derived>& logits, Eigen::Index k_a) {
    const auto pool = topk_pool(logits, k_a);
    return local_softmax(logits, pool).maxCoeff();
}

Eigen::VectorXd adaptive_thresholds(const RouterTrace& trace, int k_a);

// Thresholds actually applied per layer for the given mode (0 for None).
Eigen::VectorXd resolve_thresholds(const RouterTrace& trace, const PeuConfig& config);

ComputationalPattern accumulate_peu(const RouterTrace& trace, const PeuConfig& config);

// Sum of token scores over the trace with caller-supplied thresholds, not yet
// divided by the token count. Exposed for multi-trace aggregation.
Eigen::MatrixXd sum_token_scores(const RouterTrace& trace, const PeuConfig& config,
                                 const Eigen::VectorXd& thresholds);

}  // namespace moeprune
