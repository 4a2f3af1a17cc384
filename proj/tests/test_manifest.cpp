#include "moeprune/error.hpp"
#include "moeprune/formats.hpp"
#include "moeprune/io.hpp"
#include "moeprune/manifest.hpp"
#include "oracle.hpp"

#include <gtest/gtest.h>

#include <filesystem>

namespace fs = std::filesystem;
using namespace moeprune;

namespace {

ModelSpec small_spec() {
    ModelSpec s;
    s.num_layers = 2;
    s.num_routed_experts = 8;
    s.experts_per_token = 2;
    s.hidden_dim = 4;
    s.expert_dim = 3;
    s.non_expert_params = 100;
    return s;
}

ModelSpec deepseek_r1() {
    ModelSpec s;
    s.num_layers = 58;  // MoE layers
    s.num_routed_experts = 256;
    s.experts_per_token = 8;
    s.hidden_dim = 7168;
    s.expert_dim = 2048;
    s.matrices_per_expert = 3;  // gate, up, down
    s.non_expert_params = 670'920'000'000 - 58LL * 256 * 3 * 7168 * 2048;
    return s;
}

fs::path tmp(const std::string& name) {
    auto dir = fs::temp_directory_path() / "moeprune_manifest_tests";
    fs::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST(Manifest, KeepAllIsIdentity) {
    const auto spec = small_spec();
    const auto m = build_manifest(spec, keep_all(2, 8));
    for (int l = 0; l < 2; ++l)
        for (int i = 0; i < 8; ++i) EXPECT_EQ(m.remap[l][i], i);
    EXPECT_EQ(m.sparsity.sparsity, 0.0);
    EXPECT_EQ(m.total_params_kept, total_params(spec));
    EXPECT_EQ(memory_estimate(m, 2.0), 2.0 * static_cast<double>(total_params(spec)));
}

TEST(Manifest, DenseAscendingRemap) {
    const auto m = build_manifest(small_spec(), ExpertSelection{2, 8, {{3, 7}, {0}}, "x", {}});
    EXPECT_EQ(m.remap[0][3], 0);
    EXPECT_EQ(m.remap[0][7], 1);
    EXPECT_EQ(m.remap[0][0], -1);
    EXPECT_EQ(m.router_rows_kept[0], (std::vector<int>{3, 7}));
    EXPECT_EQ(m.effective_k, (std::vector<int>{2, 1}));
}

TEST(Manifest, RemapRoundTrip) {
    const auto m = build_manifest(small_spec(), ExpertSelection{2, 8, {{1, 2, 5}, {0, 6, 7}}, "x", {}});
    for (int l = 0; l < 2; ++l)
        for (std::size_t n = 0; n < m.router_rows_kept[l].size(); ++n)
            EXPECT_EQ(m.remap[l][m.router_rows_kept[l][n]], static_cast<int>(n));
}

TEST(Manifest, ParamAccounting) {
    const auto spec = small_spec();
    EXPECT_EQ(params_per_expert(spec), 2 * 4 * 3);
    const auto m = build_manifest(spec, ExpertSelection{2, 8, {{0, 1}, {2, 3, 4}}, "x", {}});
    EXPECT_EQ(m.total_params_kept, 100 + 24 * 5);
    auto b = spec;
    b.expert_biases = true;
    EXPECT_EQ(params_per_expert(b), 24 + 3 + 4);
}

TEST(Manifest, HalfExpertsNoNonExpertHalvesBytes) {
    auto spec = small_spec();
    spec.non_expert_params = 0;
    const auto full = build_manifest(spec, keep_all(2, 8));
    const auto half = build_manifest(spec, ExpertSelection{2, 8, {{0, 1, 2, 3}, {4, 5, 6, 7}}, "x", {}});
    EXPECT_EQ(memory_estimate(half, 2.0) * 2.0, memory_estimate(full, 2.0));
}

TEST(Manifest, MonotoneInKeepSet) {
    const auto spec = small_spec();
    std::int64_t prev = 0;
    for (int k = 1; k <= 8; ++k) {
        std::vector<int> keep;
        for (int i = 0; i < k; ++i) keep.push_back(i);
        const auto m = build_manifest(spec, ExpertSelection{2, 8, {keep, keep}, "x", {}});
        EXPECT_GT(m.total_params_kept, prev);
        prev = m.total_params_kept;
        for (int e : m.effective_k) EXPECT_EQ(e, std::min(2, k));
    }
}

TEST(Manifest, ShapeMismatchAndEmptyLayer) {
    EXPECT_THROW(build_manifest(small_spec(), keep_all(3, 8)), ShapeError);
    EXPECT_THROW(build_manifest(small_spec(), ExpertSelection{2, 8, {{0}, {}}, "x", {}}), ValueError);
}

TEST(Manifest, DeepSeekScaleRatio) {
    const auto spec = deepseek_r1();
    EXPECT_EQ(params_per_expert(spec), 44'040'192);
    EXPECT_EQ(total_params(spec), 670'920'000'000);
    std::vector<int> half(128);
    for (int i = 0; i < 128; ++i) half[i] = 2 * i;
    ExpertSelection sel{58, 256, std::vector<std::vector<int>>(58, half), "specialist", {}};
    const auto m = build_manifest(spec, sel);
    EXPECT_EQ(m.sparsity.sparsity, 0.5);
    EXPECT_NEAR(static_cast<double>(m.total_params_kept) / 1e9, 343.96, 0.02 * 343.96);
    EXPECT_NEAR(670.92 / (static_cast<double>(m.total_params_kept) / 1e9), 1.95, 0.01);
    EXPECT_EQ(2 * m.expert_params_kept, total_params(spec) - spec.non_expert_params);
}

TEST(Formats, PatternRoundTrip) {
    const auto t = oracle::random_trace(3, 8, 16, 1, 5.0);
    for (auto kind : {TransformKind::Raw, TransformKind::Exp}) {
        auto p = accumulate_peu(t, {4, kind, ThresholdMode::fixed(0.3)});
        p.scores(0, 0) = -0.0;
        const auto path = tmp("p.json");
        write_pattern(p, path);
        const auto q = read_pattern(path);
        EXPECT_EQ(q.scores, p.scores);
        EXPECT_EQ(q.thresholds, p.thresholds);
        EXPECT_EQ(q.config, p.config);
        EXPECT_EQ(q.domain_tag, p.domain_tag);
        EXPECT_EQ(q.token_count, p.token_count);
        EXPECT_EQ(format_pattern(q), read_file(path));
    }
}

TEST(Formats, PatternRankerKey) {
    const auto t = oracle::random_trace(1, 4, 4, 1);
    const auto p = score_trace(t, RankerKind{RankerKind::Kind::Frequency, {}, 2, 0});
    std::optional<RankerKind::Kind> r;
    const auto q = parse_pattern(format_pattern(p, RankerKind::Kind::Frequency), &r);
    ASSERT_TRUE(r.has_value());
    EXPECT_EQ(*r, RankerKind::Kind::Frequency);
    EXPECT_EQ(q.scores, p.scores);
    EXPECT_EQ(format_pattern(p).find("ranker"), std::string::npos);
}

TEST(Formats, PatternRejectsBadShape) {
    const auto t = oracle::random_trace(2, 4, 4, 1);
    auto text = format_pattern(accumulate_peu(t, {2, TransformKind::Raw, ThresholdMode::none()}));
    text.replace(text.find("\"num_routed_experts\":4"), 22, "\"num_routed_experts\":5");
    EXPECT_THROW(parse_pattern(text), ShapeError);
    EXPECT_THROW(parse_pattern("{"), ParseError);
}

TEST(Formats, SelectionRoundTrip) {
    const ExpertSelection s{2, 8, {{0, 3, 5}, {7}}, "specialist", {}};
    const auto path = tmp("s.json");
    write_selection(s, path);
    EXPECT_EQ(read_selection(path), s);
    EXPECT_EQ(format_selection(read_selection(path)), read_file(path));
    EXPECT_THROW(parse_selection(R"({"strategy_tag":"x","num_layers":1,"num_routed_experts":4,"keep":[[2,1]]})"),
                 ValueError);
}

TEST(Formats, ManifestRoundTrip) {
    const auto m = build_manifest(small_spec(), ExpertSelection{2, 8, {{1, 2, 5}, {0}}, "global", {}});
    const auto path = tmp("m.json");
    write_manifest(m, path);
    const auto back = read_manifest(path);
    EXPECT_EQ(back, m);
    EXPECT_EQ(format_manifest(back), read_file(path));
}

TEST(Formats, ManifestTamperDetected) {
    const auto m = build_manifest(small_spec(), ExpertSelection{2, 8, {{1, 2, 5}, {0}}, "global", {}});
    auto text = format_manifest(m);
    const auto pos = text.find("\"total_params_kept\":");
    text.replace(pos, std::string("\"total_params_kept\":").size(), "\"total_params_kept\":9");
    EXPECT_THROW(parse_manifest(text), ValueError);
    auto wrong = format_manifest(m);
    wrong.replace(wrong.find(kManifestSchema), std::string(kManifestSchema).size(), "other/9");
    EXPECT_THROW(parse_manifest(wrong), ValueError);
}

TEST(Formats, ModelSpecRoundTrip) {
    const auto spec = deepseek_r1();
    EXPECT_EQ(parse_model_spec(format_model_spec(spec)), spec);
}
