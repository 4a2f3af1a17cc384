#include "moeprune/toymoe.hpp"

#include "moeprune/error.hpp"
#include "moeprune/io.hpp"
#include "moeprune/peu.hpp"
#include "moeprune/prng.hpp"

#include <json.hpp>

#include <cmath>

namespace moeprune {

namespace {

int routing_rows(const ToySpec& s) {
    return s.num_domains + s.num_layers * (s.background_groups + s.num_domains);
}

int background_count(const ToySpec& s) {
    return s.num_experts - s.num_domains * s.specialists_per_domain - s.distractors;
}

Eigen::MatrixXd draw_basis(const ToySpec& spec, SplitMix64& rng) {
    const int d = spec.hidden_dim;
    Eigen::MatrixXd q(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) q(i, j) = rng.normal();
    // Modified Gram-Schmidt over rows.
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < i; ++j) q.row(i) -= q.row(i).dot(q.row(j)) * q.row(j);
        q.row(i).normalize();
    }
    return q;
}

std::uint64_t stream_seed(std::uint64_t seed, int domain) {
    SplitMix64 h(seed ^ (static_cast<std::uint64_t>(domain) * 0xD1B54A32D192ED03ULL));
    return h.next();
}

}  // namespace

void validate(const ToySpec& s) {
    auto fail = [](const std::string& m) { throw ValueError("toy spec: " + m); };
    if (s.num_layers < 1) fail("num_layers must be positive");
    if (s.num_experts < 2) fail("need at least 2 experts");
    if (s.top_k < 1 || s.top_k > s.num_experts) fail("top_k outside [1, num_experts]");
    if (s.expert_dim < 2 || s.expert_dim % 2 != 0) fail("expert_dim must be even and >= 2");
    if (s.num_domains < 1) fail("num_domains must be positive");
    if (s.specialists_per_domain < 0 || s.distractors < 0) fail("negative role count");
    if (background_count(s) < 0) fail("specialists and distractors exceed num_experts");
    if (background_count(s) > 0 && s.background_groups < 1)
        fail("background experts need at least one group");
    if (s.background_groups < 0) fail("negative background_groups");
    if (routing_rows(s) >= s.hidden_dim)
        fail("hidden_dim " + std::to_string(s.hidden_dim) + " leaves no output subspace (need > " +
             std::to_string(routing_rows(s)) + ")");
    if (s.noise_std < 0.0) fail("noise_std must be non-negative");
    if (!(s.domain_mean_norm > 0.0)) fail("domain_mean_norm must be positive");
    if (s.tied_output_share < 0.0 || s.tied_output_share > 1.0)
        fail("tied_output_share outside [0, 1]");
}

Eigen::VectorXd ToyMoeModel::domain_mean(int domain) const {
    return spec.domain_mean_norm * basis.row(domain).transpose();
}

Eigen::MatrixXd toy_basis(const ToySpec& spec) {
    validate(spec);
    SplitMix64 rng(spec.seed);
    return draw_basis(spec, rng);
}

ToyMoeModel gen_model(const ToySpec& spec) {
    validate(spec);
    SplitMix64 rng(spec.seed);
    ToyMoeModel model;
    model.spec = spec;
    model.basis = draw_basis(spec, rng);

    const int d = spec.hidden_dim, N = spec.num_experts, D = spec.num_domains;
    const int G = spec.background_groups, S = spec.specialists_per_domain;
    const int nr = routing_rows(spec);
    const int nf = d - nr;
    const int m = spec.expert_dim / 2;
    const double sigma = spec.noise_std > 0.0 ? spec.noise_std : 1.0;
    const double mu = spec.domain_mean_norm;
    const auto& Q = model.basis;

    Eigen::RowVectorXd us = Q.topRows(D).colwise().sum();
    const Eigen::RowVectorXd usm = us / mu;
    const Eigen::MatrixXd routing = Q.middleRows(D, nr - D);
    const Eigen::MatrixXd free = Q.bottomRows(nf);
    const double jitter_scale = spec.router_jitter / sigma / std::sqrt(double(nr - D));

    auto jitter = [&] {
        Eigen::RowVectorXd n(nr - D);
        for (int j = 0; j < nr - D; ++j) n(j) = rng.normal();
        return Eigen::RowVectorXd(jitter_scale * n * routing);
    };
    auto gaussian = [&](int rows, int cols) {
        Eigen::MatrixXd g(rows, cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) g(i, j) = rng.normal();
        return g;
    };

    for (int l = 0; l < spec.num_layers; ++l) {
        const int off = D + l * (G + D);
        ToyLayer layer;
        layer.router = Eigen::MatrixXd::Zero(N, d);
        layer.role.assign(static_cast<std::size_t>(N), kBackground);

        std::vector<int> perm(static_cast<std::size_t>(N));
        for (int i = 0; i < N; ++i) perm[static_cast<std::size_t>(i)] = i;
        for (int i = N - 1; i > 0; --i)
            std::swap(perm[static_cast<std::size_t>(i)],
                      perm[rng.below(static_cast<std::uint64_t>(i) + 1)]);

        // Per expert: input feature, switch-on level, output gain, tied block.
        Eigen::MatrixXd feature = Eigen::MatrixXd::Zero(N, d);
        Eigen::VectorXd theta = Eigen::VectorXd::Constant(N, spec.group_threshold);
        Eigen::VectorXd gain = Eigen::VectorXd::Ones(N);
        std::vector<int> tie(static_cast<std::size_t>(N), -1);

        std::size_t slot = 0;
        for (int dd = 0; dd < D; ++dd) {
            const Eigen::RowVectorXd t = Q.row(off + G + dd);
            for (int s = 0; s < S; ++s) {
                const int i = perm[slot++];
                layer.role[static_cast<std::size_t>(i)] = dd;
                tie[static_cast<std::size_t>(i)] = G + dd;
                layer.router.row(i) =
                    spec.specialist_gain / sigma * t +
                    (spec.specialist_offset - spec.specialist_boost) * usm +
                    spec.specialist_boost / mu * Q.row(dd) + jitter();
                feature.row(i) = t / sigma;
                theta(i) = spec.specialist_threshold;
            }
        }
        for (int k = 0; k < spec.distractors; ++k) {
            const int i = perm[slot++];
            layer.role[static_cast<std::size_t>(i)] = kDistractor;
            layer.router.row(i) = spec.distractor_frequency_boost * usm + jitter();
            feature.row(i) = usm / sigma;
            gain(i) = spec.distractor_output_gain;
        }
        for (int b = 0; slot < static_cast<std::size_t>(N); ++b) {
            const int i = perm[slot++];
            const int k = b % G;
            tie[static_cast<std::size_t>(i)] = k;
            layer.router.row(i) =
                spec.group_gain / sigma * Q.row(off + k) + spec.group_offset * usm + jitter();
            feature.row(i) = Q.row(off + k) / sigma;
        }

        // Output directions: tied blocks share most of their output so that
        // swapping one member for another changes little.
        std::vector<Eigen::MatrixXd> shared;
        for (int k = 0; k < G + D; ++k) shared.push_back(gaussian(m, nf));
        const double a = std::sqrt(spec.tied_output_share);
        const double b = std::sqrt(1.0 - spec.tied_output_share);
        const double w = spec.expert_steepness;
        for (int i = 0; i < N; ++i) {
            Eigen::MatrixXd o = gaussian(m, nf);
            if (tie[static_cast<std::size_t>(i)] >= 0)
                o = a * shared[static_cast<std::size_t>(tie[static_cast<std::size_t>(i)])] + b * o;
            // m x d output rows, one per unit pair.
            const Eigen::MatrixXd out =
                spec.expert_output_scale * gain(i) / std::sqrt(double(m)) * (o * free);
            ToyExpert e;
            e.w1.resize(2 * m, d);
            e.w2.resize(d, 2 * m);
            // Unit j fires on the feature above theta, unit j+m cancels the
            // response at zero feature.
            const Eigen::RowVectorXd gate = w * theta(i) * usm;
            for (int j = 0; j < m; ++j) {
                e.w1.row(j) = w * feature.row(i) - gate;
                e.w1.row(j + m) = gate;
                e.w2.col(j) = out.row(j).transpose();
                e.w2.col(j + m) = out.row(j).transpose();
            }
            layer.experts.push_back(std::move(e));
        }
        model.layers.push_back(std::move(layer));
    }
    return model;
}

std::vector<Eigen::VectorXd> gen_domain_inputs(const ToySpec& spec, int domain, int n,
                                               std::uint64_t seed) {
    if (domain < 0 || domain >= spec.num_domains)
        throw ArgumentError("domain " + std::to_string(domain) + " outside [0, " +
                            std::to_string(spec.num_domains) + ")");
    if (n < 1) throw ArgumentError("need at least one input");
    const Eigen::VectorXd mean = spec.domain_mean_norm * toy_basis(spec).row(domain).transpose();
    SplitMix64 rng(stream_seed(seed, domain));
    std::vector<Eigen::VectorXd> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int t = 0; t < n; ++t) {
        Eigen::VectorXd x(spec.hidden_dim);
        for (int j = 0; j < spec.hidden_dim; ++j) x(j) = rng.normal();
        out.push_back(mean + spec.noise_std * x);
    }
    return out;
}

namespace {

ForwardResult forward(const ToyMoeModel& model, const std::vector<std::vector<int>>& keep,
                      const std::vector<int>& effective_k, const Eigen::VectorXd& x) {
    const int L = model.spec.num_layers;
    if (x.size() != model.spec.hidden_dim)
        throw ShapeError("input has dimension " + std::to_string(x.size()) + ", model expects " +
                         std::to_string(model.spec.hidden_dim));
    ForwardResult r;
    r.logits = LogitMatrix::Zero(L, model.spec.num_experts);
    Eigen::VectorXd h = x;
    for (int l = 0; l < L; ++l) {
        const auto& layer = model.layers[static_cast<std::size_t>(l)];
        const auto& kept = keep[static_cast<std::size_t>(l)];
        Eigen::VectorXd z(static_cast<Eigen::Index>(kept.size()));
        for (std::size_t j = 0; j < kept.size(); ++j) {
            z(static_cast<Eigen::Index>(j)) = layer.router.row(kept[j]).dot(h);
            r.logits(l, kept[j]) = static_cast<float>(z(static_cast<Eigen::Index>(j)));
        }
        const auto pos = topk_pool(z, effective_k[static_cast<std::size_t>(l)]);
        const Eigen::VectorXd g = local_softmax(z, pos);
        std::vector<int> sel;
        Eigen::VectorXd delta = Eigen::VectorXd::Zero(h.size());
        for (std::size_t j = 0; j < pos.size(); ++j) {
            const int e = kept[static_cast<std::size_t>(pos[j])];
            sel.push_back(e);
            const auto& ex = layer.experts[static_cast<std::size_t>(e)];
            delta += g(static_cast<Eigen::Index>(j)) * (ex.w2 * (ex.w1 * h).array().tanh().matrix());
        }
        h += delta;
        r.selected.push_back(std::move(sel));
        r.gates.push_back(g);
    }
    r.output = h;
    return r;
}

}  // namespace

ForwardResult forward_full(const ToyMoeModel& model, const Eigen::VectorXd& x) {
    const auto all = keep_all(model.spec.num_layers, model.spec.num_experts);
    return forward(model, all.keep,
                   std::vector<int>(static_cast<std::size_t>(model.spec.num_layers),
                                    model.spec.top_k),
                   x);
}

ForwardResult forward_pruned(const ToyMoeModel& model, const CompiledManifest& manifest,
                             const Eigen::VectorXd& x) {
    if (manifest.model_spec.num_layers != model.spec.num_layers ||
        manifest.model_spec.num_routed_experts != model.spec.num_experts ||
        manifest.model_spec.experts_per_token != model.spec.top_k)
        throw ShapeError("manifest does not match the model shape");
    return forward(model, manifest.router_rows_kept, manifest.effective_k, x);
}

RouterTrace record_trace(const ToyMoeModel& model, const std::vector<Eigen::VectorXd>& inputs,
                         const std::string& domain_tag) {
    if (inputs.empty()) throw ArgumentError("record_trace needs at least one input");
    RouterTrace t;
    t.header.model_id = "toymoe-" + std::to_string(model.spec.seed);
    t.header.num_layers = model.spec.num_layers;
    t.header.num_routed_experts = model.spec.num_experts;
    t.header.domain_tag = domain_tag;
    t.header.token_count = static_cast<std::int64_t>(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i)
        t.tokens.push_back({static_cast<std::int64_t>(i), forward_full(model, inputs[i]).logits});
    return t;
}

ModelSpec toy_model_spec(const ToySpec& spec) {
    ModelSpec m;
    m.num_layers = spec.num_layers;
    m.num_routed_experts = spec.num_experts;
    m.experts_per_token = spec.top_k;
    m.hidden_dim = spec.hidden_dim;
    m.expert_dim = spec.expert_dim;
    // Router matrices; the toy has no attention or embeddings.
    m.non_expert_params =
        static_cast<std::int64_t>(spec.num_layers) * spec.num_experts * spec.hidden_dim;
    return m;
}

EvalReport evaluate(const ToyMoeModel& model, const CompiledManifest& manifest,
                    const std::vector<Eigen::VectorXd>& inputs, int domain) {
    if (inputs.empty()) throw ArgumentError("evaluate needs at least one input");
    const int L = model.spec.num_layers;
    double err = 0.0, cos = 0.0;
    std::int64_t missed = 0, slots = 0;
    for (const auto& x : inputs) {
        const auto full = forward_full(model, x);
        const auto pruned = forward_pruned(model, manifest, x);
        const double nf = full.output.norm();
        err += (full.output - pruned.output).norm() / nf;
        cos += full.output.dot(pruned.output) / (nf * pruned.output.norm());
        for (int l = 0; l < L; ++l)
            for (int e : full.selected[static_cast<std::size_t>(l)]) {
                ++slots;
                if (manifest.remap[static_cast<std::size_t>(l)][static_cast<std::size_t>(e)] < 0)
                    ++missed;
            }
    }
    EvalReport r;
    const double n = static_cast<double>(inputs.size());
    r.relative_error = err / n;
    r.cosine = cos / n;
    r.miss_rate = static_cast<double>(missed) / static_cast<double>(slots);
    std::int64_t planted = 0, kept = 0;
    for (int l = 0; l < L; ++l) {
        const auto& role = model.layers[static_cast<std::size_t>(l)].role;
        for (std::size_t i = 0; i < role.size(); ++i)
            if (role[i] == domain) {
                ++planted;
                if (manifest.remap[static_cast<std::size_t>(l)][i] >= 0) ++kept;
            }
    }
    r.recovery = planted > 0 ? static_cast<double>(kept) / planted : 1.0;
    return r;
}

namespace {

using ojson = nlohmann::ordered_json;

#define TOY_FIELDS(X)                    \
    X(num_layers)                        \
    X(num_experts)                       \
    X(top_k)                             \
    X(hidden_dim)                        \
    X(expert_dim)                        \
    X(num_domains)                       \
    X(specialists_per_domain)            \
    X(distractors)                       \
    X(background_groups)                 \
    X(specialist_boost)                  \
    X(distractor_frequency_boost)        \
    X(noise_std)                         \
    X(seed)                              \
    X(domain_mean_norm)                  \
    X(specialist_gain)                   \
    X(specialist_offset)                 \
    X(group_gain)                        \
    X(group_offset)                      \
    X(specialist_threshold)              \
    X(group_threshold)                   \
    X(router_jitter)                     \
    X(expert_steepness)                  \
    X(expert_output_scale)               \
    X(distractor_output_gain)            \
    X(tied_output_share)

}  // namespace

ToyConfig parse_toy_config(const std::string& text) {
    ojson j;
    try {
        j = ojson::parse(text);
    } catch (const ojson::parse_error& e) {
        throw ParseError(std::string("malformed toy config: ") + e.what(), 0);
    }
    ToyConfig c;
    try {
        const auto& s = j.at("spec");
        for (auto it = s.begin(); it != s.end(); ++it) {
            bool known = false;
#define READ(name)                                             \
    if (it.key() == #name) {                                   \
        c.spec.name = it.value().get<decltype(c.spec.name)>(); \
        known = true;                                          \
    }
            TOY_FIELDS(READ)
#undef READ
            if (!known) throw ValueError("toy config: unknown spec field '" + it.key() + "'");
        }
        c.calibration_seed = j.value("calibration_seed", c.calibration_seed);
        c.evaluation_seed = j.value("evaluation_seed", c.evaluation_seed);
        c.calibration_tokens = j.value("calibration_tokens", c.calibration_tokens);
        c.evaluation_tokens = j.value("evaluation_tokens", c.evaluation_tokens);
        c.subsample_tokens = j.value("subsample_tokens", c.subsample_tokens);
    } catch (const ojson::exception& e) {
        throw ParseError(std::string("bad toy config: ") + e.what(), 0);
    }
    validate(c.spec);
    return c;
}

std::string format_toy_config(const ToyConfig& c) {
    ojson s;
#define WRITE(name) s[#name] = c.spec.name;
    TOY_FIELDS(WRITE)
#undef WRITE
    ojson j;
    j["spec"] = std::move(s);
    j["calibration_seed"] = c.calibration_seed;
    j["evaluation_seed"] = c.evaluation_seed;
    j["calibration_tokens"] = c.calibration_tokens;
    j["evaluation_tokens"] = c.evaluation_tokens;
    j["subsample_tokens"] = c.subsample_tokens;
    return j.dump(2) + "\n";
}

ToyConfig read_toy_config(const std::filesystem::path& path) {
    return parse_toy_config(read_file(path));
}

}  // namespace moeprune
