#include "moeprune/patterns.hpp"

#include "moeprune/error.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <tuple>

namespace moeprune {

void validate(const ExpertSelection& sel) {
    if (sel.num_layers < 1 || static_cast<int>(sel.keep.size()) != sel.num_layers)
        throw ShapeError("selection has " + std::to_string(sel.keep.size()) +
                         " keep lists for " + std::to_string(sel.num_layers) + " layers");
    for (int l = 0; l < sel.num_layers; ++l) {
        const auto& k = sel.keep[static_cast<std::size_t>(l)];
        if (k.empty()) throw ValueError("layer " + std::to_string(l) + " keeps no experts");
        for (std::size_t j = 0; j < k.size(); ++j) {
            if (k[j] < 0 || k[j] >= sel.num_experts)
                throw ValueError("layer " + std::to_string(l) + ": expert index " +
                                 std::to_string(k[j]) + " out of range");
            if (j > 0 && k[j] <= k[j - 1])
                throw ValueError("layer " + std::to_string(l) +
                                 ": keep list not strictly ascending");
        }
    }
}

ExpertSelection keep_all(int num_layers, int num_experts) {
    ExpertSelection s;
    s.num_layers = num_layers;
    s.num_experts = num_experts;
    s.strategy_tag = "keep-all";
    std::vector<int> all(static_cast<std::size_t>(num_experts));
    std::iota(all.begin(), all.end(), 0);
    s.keep.assign(static_cast<std::size_t>(num_layers), all);
    return s;
}

namespace {

ExpertSelection per_layer(const Eigen::MatrixXd& scores, int m, bool top, const char* tag) {
    const int L = static_cast<int>(scores.rows());
    const int N = static_cast<int>(scores.cols());
    if (m < 1 || m > N)
        throw ArgumentError("per-layer budget " + std::to_string(m) + " outside [1, " +
                            std::to_string(N) + "]");
    ExpertSelection s;
    s.num_layers = L;
    s.num_experts = N;
    s.strategy_tag = tag;
    for (int l = 0; l < L; ++l) {
        std::vector<Eigen::Index> idx;
        if (top) {
            idx = topk_pool(scores.row(l), m);
        } else {
            Eigen::RowVectorXd neg = -scores.row(l);
            idx = topk_pool(neg, m);
        }
        std::vector<int> k(idx.begin(), idx.end());
        std::sort(k.begin(), k.end());
        s.keep.push_back(std::move(k));
    }
    return s;
}

}  // namespace

ExpertSelection select_specialist(const Eigen::MatrixXd& scores, int m) {
    return per_layer(scores, m, true, "specialist");
}

ExpertSelection select_last(const Eigen::MatrixXd& scores, int m) {
    return per_layer(scores, m, false, "last");
}

ExpertSelection select_global(const Eigen::MatrixXd& scores, std::int64_t total_budget) {
    const int L = static_cast<int>(scores.rows());
    const int N = static_cast<int>(scores.cols());
    const std::int64_t cells = static_cast<std::int64_t>(L) * N;
    if (total_budget < L || total_budget > cells)
        throw ArgumentError("global budget " + std::to_string(total_budget) + " outside [" +
                            std::to_string(L) + ", " + std::to_string(cells) + "]");

    // Rank position of every cell: score descending, then lower layer, then lower index.
    std::vector<std::int64_t> order(static_cast<std::size_t>(cells));
    std::iota(order.begin(), order.end(), std::int64_t{0});
    std::sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
        const double sa = scores(a / N, a % N), sb = scores(b / N, b % N);
        if (sa != sb) return sa > sb;
        return a < b;
    });

    std::vector<char> kept(static_cast<std::size_t>(cells), 0);
    std::vector<int> count(static_cast<std::size_t>(L), 0);
    for (std::int64_t r = 0; r < total_budget; ++r) {
        const auto c = order[static_cast<std::size_t>(r)];
        kept[static_cast<std::size_t>(c)] = 1;
        ++count[static_cast<std::size_t>(c / N)];
    }

    for (int l = 0; l < L; ++l) {
        if (count[static_cast<std::size_t>(l)] > 0) continue;
        // Best cell of the empty layer.
        std::int64_t promote = -1;
        for (auto c : order)
            if (c / N == l) { promote = c; break; }
        // Lowest-ranked kept cell in a layer that can spare one.
        std::int64_t demote = -1;
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            const auto c = *it;
            if (kept[static_cast<std::size_t>(c)] && count[static_cast<std::size_t>(c / N)] >= 2) {
                demote = c;
                break;
            }
        }
        kept[static_cast<std::size_t>(demote)] = 0;
        --count[static_cast<std::size_t>(demote / N)];
        kept[static_cast<std::size_t>(promote)] = 1;
        ++count[static_cast<std::size_t>(l)];
    }

    ExpertSelection s;
    s.num_layers = L;
    s.num_experts = N;
    s.strategy_tag = "global";
    s.keep.resize(static_cast<std::size_t>(L));
    for (std::int64_t c = 0; c < cells; ++c)
        if (kept[static_cast<std::size_t>(c)])
            s.keep[static_cast<std::size_t>(c / N)].push_back(static_cast<int>(c % N));
    return s;
}

ComputationalPattern synthesize_generalist(const std::vector<RouterTrace>& traces,
                                           const PeuConfig& config,
                                           GeneralistThresholds mode) {
    if (traces.empty()) throw ArgumentError("synthesize_generalist needs at least one trace");
    if (traces.size() == 1) return accumulate_peu(traces.front(), config);
    RouterTrace all = concat_traces(traces);
    if (mode == GeneralistThresholds::Blended ||
        config.threshold.kind != ThresholdMode::Kind::Adaptive)
        return accumulate_peu(all, config);

    if (all.tokens.empty()) throw ValueError("synthesize_generalist needs tokens");
    validate(config, all.num_experts());
    ComputationalPattern p;
    p.model_id = all.header.model_id;
    p.domain_tag = all.header.domain_tag;
    p.token_count = static_cast<std::int64_t>(all.tokens.size());
    p.config = config;
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(all.num_layers(), all.num_experts());
    Eigen::VectorXd weighted_r = Eigen::VectorXd::Zero(all.num_layers());
    for (const auto& t : traces) {
        if (t.tokens.empty()) continue;
        const Eigen::VectorXd r = adaptive_thresholds(t, config.k_a);
        sum += sum_token_scores(t, config, r);
        weighted_r += r * static_cast<double>(t.tokens.size());
    }
    const double n = static_cast<double>(all.tokens.size());
    p.thresholds = weighted_r / n;
    p.scores = sum / n;
    return p;
}

ExpertSelection trivial_union(const std::vector<ExpertSelection>& selections) {
    if (selections.empty()) throw ArgumentError("trivial_union needs at least one selection");
    const auto& first = selections.front();
    ExpertSelection u;
    u.num_layers = first.num_layers;
    u.num_experts = first.num_experts;
    u.strategy_tag = "trivial-union";
    u.keep.resize(static_cast<std::size_t>(first.num_layers));
    for (const auto& s : selections) {
        if (s.num_layers != first.num_layers || s.num_experts != first.num_experts)
            throw IncompatibleError("trivial_union: selections differ in shape");
        u.source_pattern_ids.insert(u.source_pattern_ids.end(), s.source_pattern_ids.begin(),
                                    s.source_pattern_ids.end());
    }
    for (int l = 0; l < first.num_layers; ++l) {
        std::set<int> merged;
        for (const auto& s : selections) {
            const auto& k = s.keep[static_cast<std::size_t>(l)];
            merged.insert(k.begin(), k.end());
        }
        u.keep[static_cast<std::size_t>(l)].assign(merged.begin(), merged.end());
    }
    return u;
}

std::vector<std::pair<int, double>> overlap_curve(const Eigen::MatrixXd& a,
                                                  const Eigen::MatrixXd& b,
                                                  const std::vector<int>& ks) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw IncompatibleError("overlap_curve: patterns differ in shape");
    const int L = static_cast<int>(a.rows());
    const int N = static_cast<int>(a.cols());
    std::vector<std::pair<int, double>> out;
    for (int k : ks) {
        if (k < 1 || k > N)
            throw ArgumentError("overlap k = " + std::to_string(k) + " outside [1, " +
                                std::to_string(N) + "]");
        double total = 0.0;
        for (int l = 0; l < L; ++l) {
            auto ta = topk_pool(a.row(l), k);
            auto tb = topk_pool(b.row(l), k);
            std::sort(ta.begin(), ta.end());
            std::sort(tb.begin(), tb.end());
            std::vector<Eigen::Index> common;
            std::set_intersection(ta.begin(), ta.end(), tb.begin(), tb.end(),
                                  std::back_inserter(common));
            total += static_cast<double>(common.size()) / k;
        }
        out.emplace_back(k, L > 0 ? total / L : 0.0);
    }
    return out;
}

SparsityReport sparsity_report(const ExpertSelection& sel) {
    SparsityReport r;
    r.total = static_cast<std::int64_t>(sel.num_layers) * sel.num_experts;
    for (const auto& k : sel.keep) {
        r.per_layer_counts.push_back(static_cast<int>(k.size()));
        r.kept_total += static_cast<std::int64_t>(k.size());
    }
    r.sparsity = r.total > 0 ? 1.0 - static_cast<double>(r.kept_total) / r.total : 0.0;
    return r;
}

}  // namespace moeprune
