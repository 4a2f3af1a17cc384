#include "moeprune/rankers.hpp"

#include "moeprune/error.hpp"
#include "moeprune/prng.hpp"

namespace moeprune {

namespace {

void require_tokens(const RouterTrace& trace, const char* who) {
    if (trace.tokens.empty()) throw ValueError(std::string(who) + " needs a non-empty trace");
}

void require_k(int k, int n) {
    if (k < 1 || k > n)
        throw ArgumentError("k_act = " + std::to_string(k) + " outside [1, " +
                            std::to_string(n) + "]");
}

}  // namespace

std::string to_string(RankerKind::Kind k) {
    switch (k) {
        case RankerKind::Kind::Peu: return "peu";
        case RankerKind::Kind::Frequency: return "frequency";
        case RankerKind::Kind::AllLogits: return "all-logits";
        case RankerKind::Kind::ActLogits: return "act-logits";
        case RankerKind::Kind::Random: return "random";
        case RankerKind::Kind::LastPeu: return "last-peu";
    }
    return "peu";
}

RankerKind::Kind parse_ranker(const std::string& s) {
    for (auto k : {RankerKind::Kind::Peu, RankerKind::Kind::Frequency,
                   RankerKind::Kind::AllLogits, RankerKind::Kind::ActLogits,
                   RankerKind::Kind::Random, RankerKind::Kind::LastPeu})
        if (to_string(k) == s) return k;
    throw ArgumentError("unknown ranker '" + s + "'");
}

Eigen::MatrixXd frequency_scores(const RouterTrace& trace, int k_act) {
    require_tokens(trace, "frequency_scores");
    require_k(k_act, trace.num_experts());
    const int L = trace.num_layers();
    Eigen::MatrixXd count = Eigen::MatrixXd::Zero(L, trace.num_experts());
    for (const auto& rec : trace.tokens)
        for (int l = 0; l < L; ++l)
            for (auto i : topk_pool(rec.logits.row(l), k_act)) count(l, i) += 1.0;
    return count / static_cast<double>(trace.tokens.size());
}

Eigen::MatrixXd all_logits_scores(const RouterTrace& trace) {
    require_tokens(trace, "all_logits_scores");
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(trace.num_layers(), trace.num_experts());
    for (const auto& rec : trace.tokens) sum += rec.logits.cast<double>();
    return sum / static_cast<double>(trace.tokens.size());
}

Eigen::MatrixXd act_logits_scores(const RouterTrace& trace, int k_act) {
    require_tokens(trace, "act_logits_scores");
    require_k(k_act, trace.num_experts());
    const int L = trace.num_layers();
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(L, trace.num_experts());
    for (const auto& rec : trace.tokens)
        for (int l = 0; l < L; ++l)
            for (auto i : topk_pool(rec.logits.row(l), k_act))
                sum(l, i) += static_cast<double>(rec.logits(l, i));
    return sum / static_cast<double>(trace.tokens.size());
}

Eigen::MatrixXd random_scores(int num_layers, int num_experts, std::uint64_t seed) {
    SplitMix64 rng(seed);
    Eigen::MatrixXd m(num_layers, num_experts);
    for (int l = 0; l < num_layers; ++l)
        for (int i = 0; i < num_experts; ++i) m(l, i) = rng.uniform();
    return m;
}

Eigen::MatrixXd last_peu_scores(const RouterTrace& trace, const PeuConfig& config) {
    return -accumulate_peu(trace, config).scores;
}

ComputationalPattern score_trace(const RouterTrace& trace, const RankerKind& ranker) {
    using K = RankerKind::Kind;
    if (ranker.kind == K::Peu) return accumulate_peu(trace, ranker.peu);
    if (ranker.kind == K::LastPeu) {
        ComputationalPattern p = accumulate_peu(trace, ranker.peu);
        p.scores = -p.scores;
        return p;
    }
    require_tokens(trace, "score_trace");
    ComputationalPattern p;
    p.model_id = trace.header.model_id;
    p.domain_tag = trace.header.domain_tag;
    p.token_count = static_cast<std::int64_t>(trace.tokens.size());
    p.thresholds = Eigen::VectorXd::Zero(trace.num_layers());
    p.config = PeuConfig{ranker.k_act, TransformKind::Raw, ThresholdMode::none()};
    switch (ranker.kind) {
        case K::Frequency:
            p.scores = frequency_scores(trace, ranker.k_act);
            break;
        case K::AllLogits:
            p.config.k_a = trace.num_experts();
            p.scores = all_logits_scores(trace);
            break;
        case K::ActLogits:
            p.scores = act_logits_scores(trace, ranker.k_act);
            break;
        case K::Random:
            p.config.k_a = trace.num_experts();
            p.scores = random_scores(trace.num_layers(), trace.num_experts(), ranker.seed);
            break;
        default:
            break;
    }
    return p;
}

}  // namespace moeprune
