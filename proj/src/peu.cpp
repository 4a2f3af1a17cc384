#include "moeprune/peu.hpp"

#include <limits>

namespace moeprune {

std::string to_string(TransformKind k) {
    switch (k) {
        case TransformKind::Raw: return "raw";
        case TransformKind::Sigmoid: return "sigmoid";
        case TransformKind::Rectifier: return "rectifier";
        case TransformKind::Exp: return "exp";
    }
    return "raw";
}

TransformKind parse_transform(const std::string& s) {
    if (s == "raw") return TransformKind::Raw;
    if (s == "sigmoid") return TransformKind::Sigmoid;
    if (s == "rectifier") return TransformKind::Rectifier;
    if (s == "exp") return TransformKind::Exp;
    throw ArgumentError("unknown transform '" + s + "'");
}

std::string to_string(ThresholdMode::Kind k) {
    switch (k) {
        case ThresholdMode::Kind::Adaptive: return "adaptive";
        case ThresholdMode::Kind::Fixed: return "fixed";
        case ThresholdMode::Kind::None: return "none";
    }
    return "none";
}

ThresholdMode::Kind parse_threshold_kind(const std::string& s) {
    if (s == "adaptive") return ThresholdMode::Kind::Adaptive;
    if (s == "fixed") return ThresholdMode::Kind::Fixed;
    if (s == "none") return ThresholdMode::Kind::None;
    throw ArgumentError("unknown threshold mode '" + s + "'");
}

void validate(const PeuConfig& config, int num_experts) {
    if (config.k_a < 1 || config.k_a > num_experts)
        throw ArgumentError("k_a = " + std::to_string(config.k_a) + " outside [1, " +
                            std::to_string(num_experts) + "]");
    if (config.threshold.kind == ThresholdMode::Kind::Fixed &&
        !(config.threshold.r >= 0.0 && config.threshold.r <= 1.0))
        throw ArgumentError("fixed threshold must lie in [0, 1]");
}

Eigen::VectorXd adaptive_thresholds(const RouterTrace& trace, int k_a) {
    if (trace.tokens.empty()) throw ValueError("adaptive threshold is undefined on an empty trace");
    validate(PeuConfig{k_a, TransformKind::Raw, ThresholdMode::adaptive()}, trace.num_experts());
    const int L = trace.num_layers();
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(L);
    for (const auto& rec : trace.tokens)
        for (int l = 0; l < L; ++l) sum(l) += max_pool_probability(rec.logits.row(l), k_a);
    Eigen::VectorXd r = sum / static_cast<double>(trace.tokens.size());
    // The mean of values in [1/k_a, 1] can round just outside the interval.
    return r.cwiseMax(1.0 / k_a).cwiseMin(1.0);
}

Eigen::VectorXd resolve_thresholds(const RouterTrace& trace, const PeuConfig& config) {
    const int L = trace.num_layers();
    switch (config.threshold.kind) {
        case ThresholdMode::Kind::Adaptive:
            return adaptive_thresholds(trace, config.k_a);
        case ThresholdMode::Kind::Fixed:
            return Eigen::VectorXd::Constant(L, config.threshold.r);
        case ThresholdMode::Kind::None:
            break;
    }
    return Eigen::VectorXd::Zero(L);
}

Eigen::MatrixXd sum_token_scores(const RouterTrace& trace, const PeuConfig& config,
                                 const Eigen::VectorXd& thresholds) {
    const int L = trace.num_layers();
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(L, trace.num_experts());
    constexpr double big = std::numeric_limits<double>::max();
    for (const auto& rec : trace.tokens)
        for (int l = 0; l < L; ++l)
            sum.row(l) += token_scores(rec.logits.row(l), config, thresholds(l)).transpose();
    if (config.transform == TransformKind::Exp) sum = sum.cwiseMin(big);
    return sum;
}

ComputationalPattern accumulate_peu(const RouterTrace& trace, const PeuConfig& config) {
    if (trace.tokens.empty()) throw ValueError("accumulate_peu needs a non-empty trace");
    validate(config, trace.num_experts());
    ComputationalPattern p;
    p.model_id = trace.header.model_id;
    p.domain_tag = trace.header.domain_tag;
    p.token_count = static_cast<std::int64_t>(trace.tokens.size());
    p.config = config;
    p.thresholds = resolve_thresholds(trace, config);
    p.scores = sum_token_scores(trace, config, p.thresholds) /
               static_cast<double>(trace.tokens.size());
    return p;
}

}  // namespace moeprune
