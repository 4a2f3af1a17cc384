#include "moeprune/formats.hpp"

#include "moeprune/error.hpp"
#include "moeprune/io.hpp"

#include <json.hpp>

#include <cmath>

namespace moeprune {

using ojson = nlohmann::ordered_json;

namespace {

ojson parse_json(const std::string& text, const char* what) {
    try {
        return ojson::parse(text);
    } catch (const ojson::parse_error& e) {
        throw ParseError(std::string("malformed ") + what + ": " + e.what(), 0);
    }
}

template <class F>
auto guarded(const char* what, F&& f) {
    try {
        return f();
    } catch (const ojson::exception& e) {
        throw ParseError(std::string("bad ") + what + ": " + e.what(), 0);
    }
}

std::string finish(const ojson& j) { return j.dump() + "\n"; }

double finite(double v, const char* what) {
    if (!std::isfinite(v)) throw ValueError(std::string(what) + " contains a non-finite value");
    return v;
}

}  // namespace

std::string format_pattern(const ComputationalPattern& p,
                           std::optional<RankerKind::Kind> ranker) {
    ojson j;
    j["model_id"] = p.model_id;
    j["domain_tag"] = p.domain_tag;
    j["num_layers"] = p.num_layers();
    j["num_routed_experts"] = p.num_experts();
    j["token_count"] = p.token_count;
    ojson c;
    c["k_a"] = p.config.k_a;
    c["transform"] = to_string(p.config.transform);
    c["threshold_mode"] = to_string(p.config.threshold.kind);
    if (p.config.threshold.kind == ThresholdMode::Kind::Fixed) c["fixed_r"] = p.config.threshold.r;
    if (ranker && *ranker != RankerKind::Kind::Peu) c["ranker"] = to_string(*ranker);
    j["config"] = c;
    j["thresholds"] = std::vector<double>(p.thresholds.data(),
                                          p.thresholds.data() + p.thresholds.size());
    ojson rows = ojson::array();
    for (int l = 0; l < p.num_layers(); ++l) {
        ojson row = ojson::array();
        for (int i = 0; i < p.num_experts(); ++i) row.push_back(p.scores(l, i));
        rows.push_back(std::move(row));
    }
    j["scores"] = std::move(rows);
    return finish(j);
}

ComputationalPattern parse_pattern(const std::string& text,
                                   std::optional<RankerKind::Kind>* ranker) {
    const ojson j = parse_json(text, "pattern");
    return guarded("pattern", [&] {
        ComputationalPattern p;
        p.model_id = j.at("model_id").get<std::string>();
        p.domain_tag = j.at("domain_tag").get<std::string>();
        p.token_count = j.at("token_count").get<std::int64_t>();
        const int L = j.at("num_layers").get<int>();
        const int N = j.at("num_routed_experts").get<int>();
        if (L < 1 || N < 2) throw ShapeError("pattern: bad dimensions");
        const auto& c = j.at("config");
        p.config.k_a = c.at("k_a").get<int>();
        p.config.transform = parse_transform(c.at("transform").get<std::string>());
        p.config.threshold.kind = parse_threshold_kind(c.at("threshold_mode").get<std::string>());
        if (p.config.threshold.kind == ThresholdMode::Kind::Fixed)
            p.config.threshold.r = c.at("fixed_r").get<double>();
        if (ranker) {
            *ranker = std::nullopt;
            if (c.contains("ranker")) *ranker = parse_ranker(c.at("ranker").get<std::string>());
        }
        validate(p.config, N);
        const auto& th = j.at("thresholds");
        if (!th.is_array() || static_cast<int>(th.size()) != L)
            throw ShapeError("pattern: expected " + std::to_string(L) + " thresholds");
        p.thresholds.resize(L);
        for (int l = 0; l < L; ++l) p.thresholds(l) = finite(th[l].get<double>(), "thresholds");
        const auto& sc = j.at("scores");
        if (!sc.is_array() || static_cast<int>(sc.size()) != L)
            throw ShapeError("pattern: expected " + std::to_string(L) + " score rows");
        p.scores.resize(L, N);
        for (int l = 0; l < L; ++l) {
            const auto& row = sc[static_cast<std::size_t>(l)];
            if (!row.is_array() || static_cast<int>(row.size()) != N)
                throw ShapeError("pattern: layer " + std::to_string(l) + " has wrong width");
            for (int i = 0; i < N; ++i)
                p.scores(l, i) = finite(row[static_cast<std::size_t>(i)].get<double>(), "scores");
        }
        return p;
    });
}

void write_pattern(const ComputationalPattern& p, const std::filesystem::path& path,
                   std::optional<RankerKind::Kind> ranker) {
    write_file_atomic(path, format_pattern(p, ranker));
}

ComputationalPattern read_pattern(const std::filesystem::path& path) {
    return parse_pattern(read_file(path));
}

namespace {

ojson keep_json(const std::vector<std::vector<int>>& keep) {
    ojson k = ojson::array();
    for (const auto& layer : keep) k.push_back(layer);
    return k;
}

}  // namespace

std::string format_selection(const ExpertSelection& s) {
    ojson j;
    j["strategy_tag"] = s.strategy_tag;
    j["num_layers"] = s.num_layers;
    j["num_routed_experts"] = s.num_experts;
    j["keep"] = keep_json(s.keep);
    return finish(j);
}

ExpertSelection parse_selection(const std::string& text) {
    const ojson j = parse_json(text, "selection");
    ExpertSelection s = guarded("selection", [&] {
        ExpertSelection s;
        s.strategy_tag = j.at("strategy_tag").get<std::string>();
        s.num_layers = j.at("num_layers").get<int>();
        s.num_experts = j.at("num_routed_experts").get<int>();
        s.keep = j.at("keep").get<std::vector<std::vector<int>>>();
        return s;
    });
    validate(s);
    return s;
}

void write_selection(const ExpertSelection& s, const std::filesystem::path& path) {
    validate(s);
    write_file_atomic(path, format_selection(s));
}

ExpertSelection read_selection(const std::filesystem::path& path) {
    return parse_selection(read_file(path));
}

namespace {

ojson spec_json(const ModelSpec& s) {
    ojson j;
    j["num_layers"] = s.num_layers;
    j["num_routed_experts"] = s.num_routed_experts;
    j["experts_per_token"] = s.experts_per_token;
    j["hidden_dim"] = s.hidden_dim;
    j["expert_dim"] = s.expert_dim;
    j["matrices_per_expert"] = s.matrices_per_expert;
    j["expert_biases"] = s.expert_biases;
    j["non_expert_params"] = s.non_expert_params;
    return j;
}

ModelSpec spec_from(const ojson& j) {
    ModelSpec s;
    s.num_layers = j.at("num_layers").get<int>();
    s.num_routed_experts = j.at("num_routed_experts").get<int>();
    s.experts_per_token = j.at("experts_per_token").get<int>();
    s.hidden_dim = j.at("hidden_dim").get<std::int64_t>();
    s.expert_dim = j.at("expert_dim").get<std::int64_t>();
    s.matrices_per_expert = j.value("matrices_per_expert", 2);
    s.expert_biases = j.value("expert_biases", false);
    s.non_expert_params = j.value("non_expert_params", std::int64_t{0});
    validate(s);
    return s;
}

}  // namespace

std::string format_model_spec(const ModelSpec& spec) { return finish(spec_json(spec)); }

ModelSpec parse_model_spec(const std::string& text) {
    const ojson j = parse_json(text, "model spec");
    return guarded("model spec", [&] { return spec_from(j); });
}

std::string format_manifest(const CompiledManifest& m) {
    ojson j;
    j["schema"] = kManifestSchema;
    j["model_spec"] = spec_json(m.model_spec);
    j["strategy_tag"] = m.selection.strategy_tag;
    j["keep"] = keep_json(m.selection.keep);
    ojson remap = ojson::array();
    for (const auto& layer : m.remap) {
        ojson pairs = ojson::array();
        for (std::size_t old = 0; old < layer.size(); ++old)
            if (layer[old] >= 0) pairs.push_back({static_cast<int>(old), layer[old]});
        remap.push_back(std::move(pairs));
    }
    j["remap"] = std::move(remap);
    j["router_rows_kept"] = keep_json(m.router_rows_kept);
    j["effective_k"] = m.effective_k;
    ojson sp;
    sp["kept_total"] = m.sparsity.kept_total;
    sp["total"] = m.sparsity.total;
    sp["sparsity"] = m.sparsity.sparsity;
    sp["per_layer_counts"] = m.sparsity.per_layer_counts;
    j["sparsity_report"] = std::move(sp);
    j["params_per_expert"] = params_per_expert(m.model_spec);
    j["expert_params_kept"] = m.expert_params_kept;
    j["total_params_kept"] = m.total_params_kept;
    return finish(j);
}

CompiledManifest parse_manifest(const std::string& text) {
    const ojson j = parse_json(text, "manifest");
    return guarded("manifest", [&] {
        const auto schema = j.at("schema").get<std::string>();
        if (schema != kManifestSchema)
            throw ValueError("manifest: unsupported schema '" + schema + "'");
        ExpertSelection sel;
        sel.strategy_tag = j.at("strategy_tag").get<std::string>();
        const ModelSpec spec = spec_from(j.at("model_spec"));
        sel.num_layers = spec.num_layers;
        sel.num_experts = spec.num_routed_experts;
        sel.keep = j.at("keep").get<std::vector<std::vector<int>>>();
        CompiledManifest m = build_manifest(spec, sel);
        if (format_manifest(m) != finish(j))
            throw ValueError("manifest: derived fields disagree with keep lists");
        return m;
    });
}

void write_manifest(const CompiledManifest& m, const std::filesystem::path& path) {
    write_file_atomic(path, format_manifest(m));
}

CompiledManifest read_manifest(const std::filesystem::path& path) {
    return parse_manifest(read_file(path));
}

}  // namespace moeprune
