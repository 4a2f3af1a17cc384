#pragma once

#include "moeprune/manifest.hpp"
#include "moeprune/trace.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace moeprune {

// Synthetic MoE with planted roles. Every expert is a d -> d_ff -> d block
// with tanh in between. The generator lays out an orthonormal basis of R^d:
//   rows [0, D)                      domain mean directions u_d
//   per layer l, from D + l (G + D)  G background-group directions, then
//                                    D specialist feature directions
//   remaining rows                   output subspace written by the experts
// Router rows and expert input weights live in the first block, expert
// outputs in the last, so one layer's outputs never shift the next layer's
// routing except through the planted features.
struct ToySpec {
    int num_layers = 2;
    int num_experts = 64;
    int top_k = 16;
    int hidden_dim = 32;
    int expert_dim = 16;  // even: units come in pairs
    int num_domains = 3;
    int specialists_per_domain = 4;
    int distractors = 24;
    int background_groups = 4;

    double specialist_boost = 16.0;           // in-domain router offset
    double distractor_frequency_boost = 1.0;  // shared offset toward all domains
    double noise_std = 0.2;
    std::uint64_t seed = 7;

    double domain_mean_norm = 20.0;
    double specialist_gain = 12.0;     // router weight on the specialist feature
    double specialist_offset = -13.0;  // router offset toward every domain mean
    double group_gain = 10.0;
    double group_offset = -6.0;
    double specialist_threshold = 1.3;  // feature level at which an expert switches on
    double group_threshold = 1.0;
    double router_jitter = 0.02;
    double expert_steepness = 6.0;
    double expert_output_scale = 0.5;
    double distractor_output_gain = 0.01;
    double tied_output_share = 0.8;  // fraction of output variance shared within a tied block

    bool operator==(const ToySpec&) const = default;
};

void validate(const ToySpec& spec);

struct ToyExpert {
    Eigen::MatrixXd w1;  // d_ff x d
    Eigen::MatrixXd w2;  // d x d_ff
};

// Role codes per (layer, expert).
inline constexpr int kDistractor = -1;
inline constexpr int kBackground = -2;

struct ToyLayer {
    Eigen::MatrixXd router;  // N x d
    std::vector<ToyExpert> experts;
    std::vector<int> role;  // domain index for specialists, kDistractor, kBackground
};

struct ToyMoeModel {
    ToySpec spec;
    Eigen::MatrixXd basis;  // d x d, orthonormal rows
    std::vector<ToyLayer> layers;

    Eigen::VectorXd domain_mean(int domain) const;
};

ToyMoeModel gen_model(const ToySpec& spec);

// Rows of the orthonormal basis; a pure function of spec.seed.
Eigen::MatrixXd toy_basis(const ToySpec& spec);

std::vector<Eigen::VectorXd> gen_domain_inputs(const ToySpec& spec, int domain, int n,
                                               std::uint64_t seed);

struct ForwardResult {
    Eigen::VectorXd output;
    LogitMatrix logits;                 // L x N, zero for pruned experts
    std::vector<std::vector<int>> selected;  // per layer, by descending logit
    std::vector<Eigen::VectorXd> gates;      // matches selected
};

ForwardResult forward_full(const ToyMoeModel& model, const Eigen::VectorXd& x);
ForwardResult forward_pruned(const ToyMoeModel& model, const CompiledManifest& manifest,
                             const Eigen::VectorXd& x);

RouterTrace record_trace(const ToyMoeModel& model, const std::vector<Eigen::VectorXd>& inputs,
                         const std::string& domain_tag);

ModelSpec toy_model_spec(const ToySpec& spec);

struct EvalReport {
    double relative_error = 0.0;
    double cosine = 1.0;
    double miss_rate = 0.0;
    double recovery = 1.0;
};

// Recovery counts the planted specialists of `domain` across all layers.
EvalReport evaluate(const ToyMoeModel& model, const CompiledManifest& manifest,
                    const std::vector<Eigen::VectorXd>& inputs, int domain);

// Reference configuration file: the spec plus the seeds and token counts
// used by the acceptance run.
struct ToyConfig {
    ToySpec spec;
    std::uint64_t calibration_seed = 11;
    std::uint64_t evaluation_seed = 12;
    int calibration_tokens = 256;
    int evaluation_tokens = 256;
    int subsample_tokens = 32;

    bool operator==(const ToyConfig&) const = default;
};

ToyConfig parse_toy_config(const std::string& text);
std::string format_toy_config(const ToyConfig& config);
ToyConfig read_toy_config(const std::filesystem::path& path);

}  // namespace moeprune
