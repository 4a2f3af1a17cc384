#include "moeprune/error.hpp"
#include "moeprune/io.hpp"
#include "moeprune/manifest.hpp"
#include "moeprune/patterns.hpp"
#include "moeprune/peu.hpp"
#include "moeprune/toymoe.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>

using namespace moeprune;

namespace {

ToySpec small() {
    ToySpec s;
    s.num_experts = 32;
    s.top_k = 4;
    s.distractors = 8;
    s.background_groups = 2;
    return s;
}

bool same_bytes(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

ToyMoeModel hand_model() {
    ToyMoeModel m;
    m.spec.num_layers = 1;
    m.spec.num_experts = 3;
    m.spec.top_k = 2;
    m.spec.hidden_dim = 2;
    m.spec.expert_dim = 2;
    ToyLayer layer;
    layer.router.resize(3, 2);
    layer.router << 1.0, 0.5, -0.5, 1.0, 0.2, -0.3;
    ToyExpert e0, e1, e2;
    e0.w1.resize(2, 2);
    e0.w1 << 0.3, -0.2, 0.1, 0.4;
    e0.w2.resize(2, 2);
    e0.w2 << 0.5, 0.0, -0.25, 0.75;
    e1.w1.resize(2, 2);
    e1.w1 << -0.6, 0.2, 0.0, 0.9;
    e1.w2.resize(2, 2);
    e1.w2 << 0.1, 0.2, 0.3, -0.4;
    e2.w1 = Eigen::MatrixXd::Identity(2, 2);
    e2.w2 = Eigen::MatrixXd::Identity(2, 2);
    layer.experts = {e0, e1, e2};
    layer.role = {kBackground, kBackground, kBackground};
    m.layers.push_back(layer);
    return m;
}

}  // namespace

TEST(ToyModel, Deterministic) {
    const auto a = gen_model(small());
    const auto b = gen_model(small());
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        EXPECT_TRUE(same_bytes(a.layers[l].router, b.layers[l].router));
        for (std::size_t i = 0; i < a.layers[l].experts.size(); ++i) {
            EXPECT_TRUE(same_bytes(a.layers[l].experts[i].w1, b.layers[l].experts[i].w1));
            EXPECT_TRUE(same_bytes(a.layers[l].experts[i].w2, b.layers[l].experts[i].w2));
        }
    }
    auto other = small();
    other.seed = 8;
    EXPECT_FALSE(same_bytes(a.layers[0].router, gen_model(other).layers[0].router));
}

TEST(ToyModel, RoleCounts) {
    ToySpec s;
    s.distractors = 8;
    const auto m = gen_model(s);
    for (const auto& layer : m.layers) {
        int spec = 0, dist = 0;
        for (int r : layer.role) {
            spec += r >= 0;
            dist += r == kDistractor;
        }
        EXPECT_EQ(spec, 12);
        EXPECT_EQ(dist, 8);
    }
}

TEST(ToyModel, ZeroBoostsKeepLabels) {
    auto s = small();
    s.specialist_boost = 0.0;
    s.distractor_frequency_boost = 0.0;
    const auto m = gen_model(s);
    int spec = 0;
    for (int r : m.layers[0].role) spec += r >= 0;
    EXPECT_EQ(spec, 12);
}

TEST(ToyModel, BasisOrthonormal) {
    const auto q = toy_basis(ToySpec{});
    EXPECT_LE((q * q.transpose() - Eigen::MatrixXd::Identity(q.rows(), q.rows())).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ToyModel, InvalidSpec) {
    ToySpec s;
    s.distractors = 60;
    EXPECT_THROW(gen_model(s), ValueError);
    s = ToySpec{};
    s.expert_dim = 3;
    EXPECT_THROW(gen_model(s), ValueError);
    s = ToySpec{};
    s.hidden_dim = 17;  // equals the routing rows, no output subspace left
    EXPECT_THROW(gen_model(s), ValueError);
}

TEST(ToyInputs, NoiseFreeEqualsMean) {
    auto s = ToySpec{};
    s.noise_std = 0.0;
    const auto m = gen_model(s);
    for (const auto& x : gen_domain_inputs(s, 1, 5, 3)) EXPECT_EQ(x, m.domain_mean(1));
}

TEST(ToyInputs, DeterministicAndDistinct) {
    const ToySpec s;
    const auto a = gen_domain_inputs(s, 0, 4, 9);
    EXPECT_EQ(a, gen_domain_inputs(s, 0, 4, 9));
    const auto m = gen_model(s);
    EXPECT_NE(m.domain_mean(0), m.domain_mean(1));
    EXPECT_NE(a[0], gen_domain_inputs(s, 0, 4, 10)[0]);
    EXPECT_THROW(gen_domain_inputs(s, 3, 1, 0), ArgumentError);
}

TEST(Forward, HandComputedBlock) {
    const auto m = hand_model();
    Eigen::VectorXd x(2);
    x << 1.0, -0.5;
    const auto r = forward_full(m, x);
    EXPECT_NEAR(r.output(0), 1.41937251, 1e-6);
    EXPECT_NEAR(r.output(1), -0.78707351, 1e-6);
    EXPECT_EQ(r.selected[0], (std::vector<int>{0, 2}));
    EXPECT_NEAR(r.gates[0](0), 0.59868766, 1e-6);
}

TEST(Forward, SingleExpertGateIsOne) {
    auto m = hand_model();
    m.spec.top_k = 1;
    const auto r = forward_full(m, Eigen::Vector2d(1.0, -0.5));
    EXPECT_EQ(r.gates[0].size(), 1);
    EXPECT_EQ(r.gates[0](0), 1.0);
}

TEST(Forward, ZeroExpertsAreIdentity) {
    auto m = gen_model(small());
    for (auto& layer : m.layers)
        for (auto& e : layer.experts) {
            e.w1.setZero();
            e.w2.setZero();
        }
    const auto x = gen_domain_inputs(m.spec, 0, 1, 1)[0];
    EXPECT_EQ(forward_full(m, x).output, x);
    const auto man = build_manifest(toy_model_spec(m.spec), select_specialist(
        Eigen::MatrixXd::Zero(m.spec.num_layers, m.spec.num_experts), 5));
    EXPECT_EQ(forward_pruned(m, man, x).output, x);
}

TEST(Forward, GatesNormalized) {
    const auto m = gen_model(ToySpec{});
    const auto man = build_manifest(toy_model_spec(m.spec), select_last(
        Eigen::MatrixXd::Zero(m.spec.num_layers, m.spec.num_experts), 3));
    for (const auto& x : gen_domain_inputs(m.spec, 2, 20, 4)) {
        for (const auto& g : forward_full(m, x).gates) EXPECT_NEAR(g.sum(), 1.0, 1e-9);
        const auto p = forward_pruned(m, man, x);
        for (const auto& g : p.gates) {
            EXPECT_EQ(g.size(), 3);
            EXPECT_NEAR(g.sum(), 1.0, 1e-9);
        }
    }
}

TEST(Forward, KeepAllPrunedIsBitExact) {
    const auto m = gen_model(ToySpec{});
    const auto man = build_manifest(toy_model_spec(m.spec), keep_all(2, 64));
    for (const auto& x : gen_domain_inputs(m.spec, 0, 32, 5)) {
        const auto a = forward_full(m, x).output;
        const auto b = forward_pruned(m, man, x).output;
        EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()), 0);
    }
}

TEST(Forward, PruningAllFullChoicesStaysFinite) {
    const auto m = gen_model(ToySpec{});
    const auto x = gen_domain_inputs(m.spec, 0, 1, 6)[0];
    const auto full = forward_full(m, x);
    ExpertSelection sel = keep_all(2, 64);
    for (int l = 0; l < 2; ++l) {
        std::vector<int> keep;
        for (int i = 0; i < 64; ++i)
            if (std::find(full.selected[l].begin(), full.selected[l].end(), i) == full.selected[l].end())
                keep.push_back(i);
        sel.keep[l] = keep;
    }
    const auto out = forward_pruned(m, build_manifest(toy_model_spec(m.spec), sel), x).output;
    EXPECT_TRUE(out.allFinite());
}

TEST(Forward, ExactlyKKeptAlwaysSelected) {
    const auto m = gen_model(ToySpec{});
    ExpertSelection sel = keep_all(2, 64);
    for (auto& k : sel.keep) {
        k.clear();
        for (int i = 0; i < 16; ++i) k.push_back(i * 4);
    }
    const auto man = build_manifest(toy_model_spec(m.spec), sel);
    const auto x = gen_domain_inputs(m.spec, 1, 1, 2)[0];
    const auto r = forward_pruned(m, man, x);
    for (int l = 0; l < 2; ++l) {
        auto s = r.selected[l];
        std::sort(s.begin(), s.end());
        EXPECT_EQ(s, sel.keep[l]);
    }
}

TEST(Forward, ShapeMismatch) {
    const auto m = gen_model(ToySpec{});
    ModelSpec other = toy_model_spec(m.spec);
    other.num_routed_experts = 32;
    const auto man = build_manifest(other, keep_all(2, 32));
    EXPECT_THROW(forward_pruned(m, man, Eigen::VectorXd::Zero(32)), ShapeError);
}

TEST(RecordTrace, Contract) {
    const auto m = gen_model(ToySpec{});
    const auto xs = gen_domain_inputs(m.spec, 0, 7, 1);
    const auto t = record_trace(m, xs, "d0");
    EXPECT_EQ(t.header.token_count, 7);
    EXPECT_EQ(t.num_experts(), 64);
    validate(t);
    EXPECT_EQ(format_trace(t), format_trace(record_trace(m, xs, "d0")));
    EXPECT_THROW(record_trace(m, {}, "d0"), ArgumentError);
}

TEST(Evaluate, KeepAll) {
    const auto m = gen_model(ToySpec{});
    const auto man = build_manifest(toy_model_spec(m.spec), keep_all(2, 64));
    const auto r = evaluate(m, man, gen_domain_inputs(m.spec, 0, 16, 1), 0);
    EXPECT_EQ(r.relative_error, 0.0);
    EXPECT_NEAR(r.cosine, 1.0, 1e-15);
    EXPECT_EQ(r.miss_rate, 0.0);
    EXPECT_EQ(r.recovery, 1.0);
}

TEST(Evaluate, AdversarialKeepNoSpecialists) {
    const auto m = gen_model(ToySpec{});
    ExpertSelection sel = keep_all(2, 64);
    for (int l = 0; l < 2; ++l) {
        sel.keep[l].clear();
        for (int i = 0; i < 64; ++i)
            if (m.layers[l].role[i] < 0) sel.keep[l].push_back(i);
    }
    const auto r = evaluate(m, build_manifest(toy_model_spec(m.spec), sel),
                            gen_domain_inputs(m.spec, 0, 16, 1), 0);
    EXPECT_EQ(r.recovery, 0.0);
    EXPECT_TRUE(std::isfinite(r.relative_error));
}

TEST(Evaluate, ReferenceRegression) {
    // Frozen from the first verified run on the reference config.
    const ToyConfig cfg = read_toy_config(MOEPRUNE_REF_CONFIG);
    const auto m = gen_model(cfg.spec);
    const auto t = record_trace(m, gen_domain_inputs(cfg.spec, 0, 256, cfg.calibration_seed), "d0");
    const auto p = accumulate_peu(t, {16, TransformKind::Rectifier, ThresholdMode::adaptive()});
    const auto man = build_manifest(toy_model_spec(cfg.spec), select_specialist(p.scores, 32));
    const auto r = evaluate(m, man, gen_domain_inputs(cfg.spec, 0, 256, cfg.evaluation_seed), 0);
    EXPECT_NEAR(r.relative_error, 0.003099645230580563, 1e-9);
    EXPECT_NEAR(r.cosine, 0.999952896041548, 1e-9);
    EXPECT_NEAR(r.miss_rate, 0.5616455078125, 1e-12);
    EXPECT_EQ(r.recovery, 1.0);
}

TEST(ToyConfigFile, RoundTrip) {
    const ToyConfig c = read_toy_config(MOEPRUNE_REF_CONFIG);
    EXPECT_EQ(parse_toy_config(format_toy_config(c)), c);
    EXPECT_EQ(format_toy_config(c), read_file(MOEPRUNE_REF_CONFIG));
    EXPECT_THROW(parse_toy_config(R"({"spec":{"bogus":1}})"), ValueError);
}
