#include "moeprune/error.hpp"
#include "moeprune/formats.hpp"
#include "moeprune/io.hpp"
#include "moeprune/manifest.hpp"
#include "moeprune/patterns.hpp"
#include "moeprune/peu.hpp"
#include "moeprune/rankers.hpp"
#include "moeprune/report.hpp"
#include "moeprune/toymoe.hpp"
#include "moeprune/trace.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace mp = moeprune;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TraceGenArgs {
    std::string spec, out, tag;
    int domain = 0;
    int tokens = 0;
    std::optional<std::uint64_t> seed;
};

struct AnalyzeArgs {
    std::vector<std::string> traces;
    std::string out, ranker = "peu", transform = "rectifier", threshold = "adaptive";
    int k_a = 8;
    std::optional<double> fixed_r;
    std::optional<std::uint64_t> seed;
    bool per_domain = false;
};

struct CompileArgs {
    std::string pattern, out, spec, model, manifest;
    std::vector<std::string> unions;
    std::optional<int> per_layer, last;
    std::optional<std::int64_t> global;
};

struct EvalArgs {
    std::string spec, selection, manifest, out;
    int domain = 0;
    int tokens = 0;
    std::optional<std::uint64_t> seed;
};

struct ReportArgs {
    std::string spec, pattern, pattern_b, out, ranker_label = "peu";
    std::vector<int> budgets, ks;
    int domain = 0;
    int tokens = 0;
    std::optional<std::uint64_t> seed;
};

void emit(const std::string& path, const std::string& content) {
    if (path.empty() || path == "-")
        std::cout << content;
    else
        mp::write_file_atomic(path, content);
}

mp::ToyConfig load_toy(const std::string& path) { return mp::read_toy_config(path); }

int run_trace_gen(const TraceGenArgs& a) {
    const auto cfg = load_toy(a.spec);
    const int n = a.tokens > 0 ? a.tokens : cfg.calibration_tokens;
    const auto seed = a.seed.value_or(cfg.calibration_seed);
    const auto model = mp::gen_model(cfg.spec);
    const auto inputs = mp::gen_domain_inputs(cfg.spec, a.domain, n, seed);
    const std::string tag = a.tag.empty() ? "domain-" + std::to_string(a.domain) : a.tag;
    mp::write_trace(mp::record_trace(model, inputs, tag), a.out);
    return 0;
}

int run_analyze(const AnalyzeArgs& a) {
    mp::RankerKind r;
    r.kind = mp::parse_ranker(a.ranker);
    r.peu.k_a = a.k_a;
    r.peu.transform = mp::parse_transform(a.transform);
    r.peu.threshold.kind = mp::parse_threshold_kind(a.threshold);
    if (r.peu.threshold.kind == mp::ThresholdMode::Kind::Fixed) {
        if (!a.fixed_r) throw UsageError("--threshold fixed requires --fixed-r");
        r.peu.threshold.r = *a.fixed_r;
    }
    r.k_act = a.k_a;
    if (r.kind == mp::RankerKind::Kind::Random) {
        if (!a.seed) throw UsageError("--ranker random requires --seed");
        r.seed = *a.seed;
    }

    std::vector<mp::RouterTrace> traces;
    for (const auto& p : a.traces) traces.push_back(mp::read_trace(p));

    mp::ComputationalPattern pattern;
    if (traces.size() > 1) {
        if (r.kind != mp::RankerKind::Kind::Peu)
            throw UsageError("multiple --trace inputs are only supported with --ranker peu");
        pattern = mp::synthesize_generalist(traces, r.peu,
                                            a.per_domain ? mp::GeneralistThresholds::PerDomain
                                                         : mp::GeneralistThresholds::Blended);
    } else {
        pattern = mp::score_trace(traces.front(), r);
    }
    mp::write_pattern(pattern, a.out, r.kind);
    return 0;
}

int run_compile(const CompileArgs& a) {
    mp::ExpertSelection sel;
    if (!a.unions.empty()) {
        if (!a.pattern.empty()) throw UsageError("--union and --pattern are exclusive");
        std::vector<mp::ExpertSelection> parts;
        for (const auto& p : a.unions) parts.push_back(mp::read_selection(p));
        sel = mp::trivial_union(parts);
    } else {
        if (a.pattern.empty()) throw UsageError("compile needs --pattern or --union");
        const int modes = int(a.per_layer.has_value()) + int(a.last.has_value()) +
                          int(a.global.has_value());
        if (modes != 1) throw UsageError("choose exactly one of --per-layer, --last, --global");
        const auto pattern = mp::read_pattern(a.pattern);
        if (a.per_layer)
            sel = mp::select_specialist(pattern.scores, *a.per_layer);
        else if (a.last)
            sel = mp::select_last(pattern.scores, *a.last);
        else
            sel = mp::select_global(pattern.scores, *a.global);
    }
    if (!a.out.empty()) mp::write_selection(sel, a.out);

    if (!a.manifest.empty()) {
        mp::ModelSpec spec;
        if (!a.model.empty())
            spec = mp::parse_model_spec(mp::read_file(a.model));
        else if (!a.spec.empty())
            spec = mp::toy_model_spec(load_toy(a.spec).spec);
        else
            throw UsageError("--manifest needs --model or --spec");
        mp::write_manifest(mp::build_manifest(spec, sel), a.manifest);
    }
    if (a.out.empty() && a.manifest.empty()) throw UsageError("compile needs --out or --manifest");
    return 0;
}

std::string report_json(const mp::EvalReport& r, const mp::CompiledManifest& m) {
    nlohmann::ordered_json j;
    j["relative_error"] = r.relative_error;
    j["cosine"] = r.cosine;
    j["miss_rate"] = r.miss_rate;
    j["recovery"] = r.recovery;
    j["sparsity"] = m.sparsity.sparsity;
    j["params_kept"] = m.total_params_kept;
    return j.dump() + "\n";
}

int run_eval(const EvalArgs& a) {
    const auto cfg = load_toy(a.spec);
    const auto model = mp::gen_model(cfg.spec);
    const int n = a.tokens > 0 ? a.tokens : cfg.evaluation_tokens;
    const auto inputs =
        mp::gen_domain_inputs(cfg.spec, a.domain, n, a.seed.value_or(cfg.evaluation_seed));
    if (!a.selection.empty() && !a.manifest.empty())
        throw UsageError("--selection and --manifest are exclusive");
    mp::CompiledManifest m;
    if (!a.manifest.empty()) {
        m = mp::read_manifest(a.manifest);
    } else {
        const auto sel = a.selection.empty()
                             ? mp::keep_all(cfg.spec.num_layers, cfg.spec.num_experts)
                             : mp::read_selection(a.selection);
        m = mp::build_manifest(mp::toy_model_spec(cfg.spec), sel);
    }
    emit(a.out, report_json(mp::evaluate(model, m, inputs, a.domain), m));
    return 0;
}

int run_sweep(const ReportArgs& a) {
    const auto cfg = load_toy(a.spec);
    const auto model = mp::gen_model(cfg.spec);
    const auto pattern = mp::read_pattern(a.pattern);
    const int n = a.tokens > 0 ? a.tokens : cfg.evaluation_tokens;
    const auto inputs =
        mp::gen_domain_inputs(cfg.spec, a.domain, n, a.seed.value_or(cfg.evaluation_seed));
    std::vector<int> budgets = a.budgets;
    if (budgets.empty()) {
        const int N = cfg.spec.num_experts;
        budgets = {N, N / 2, N / 4};
    }
    emit(a.out, mp::sweep_csv(mp::sparsity_sweep(model, pattern, a.ranker_label, budgets,
                                                 inputs, a.domain)));
    return 0;
}

int run_overlap(const ReportArgs& a) {
    const auto pa = mp::read_pattern(a.pattern);
    const auto pb = mp::read_pattern(a.pattern_b);
    std::vector<int> ks = a.ks;
    if (ks.empty())
        for (int k = pa.num_experts(); k >= 1; k /= 2) ks.push_back(k);
    emit(a.out, mp::overlap_csv(mp::overlap_curve(pa.scores, pb.scores, ks)));
    return 0;
}

int run_heatmap(const ReportArgs& a) {
    emit(a.out, mp::heatmap_csv(mp::read_pattern(a.pattern)));
    return 0;
}

std::string versions() {
    return std::string("moeprune 1.0.0\n") + "trace " + mp::kTraceSchema + "\npattern " +
           mp::kPatternSchema + "\nselection " + mp::kSelectionSchema + "\nmanifest " +
           mp::kManifestSchema + "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Router-trace analysis and expert pruning for mixture-of-experts models"};
    app.require_subcommand(1);
    app.set_version_flag("--version", versions);

    TraceGenArgs tg;
    auto* c_tg = app.add_subcommand("trace-gen", "Record a router trace from the toy model");
    c_tg->add_option("--spec", tg.spec, "Toy model config (JSON)")->required()->check(CLI::ExistingFile);
    c_tg->add_option("--domain", tg.domain, "Domain index")->default_val(0);
    c_tg->add_option("--tokens", tg.tokens, "Number of tokens (default: from config)");
    c_tg->add_option("--seed", tg.seed, "Input stream seed (default: config calibration_seed)");
    c_tg->add_option("--tag", tg.tag, "Domain tag written to the header");
    c_tg->add_option("--out", tg.out, "Output trace (JSONL)")->required();

    AnalyzeArgs an;
    auto* c_an = app.add_subcommand("analyze", "Score experts from one or more traces");
    c_an->add_option("--trace", an.traces, "Input trace; repeat to blend domains")->required()->check(CLI::ExistingFile);
    c_an->add_option("--ranker", an.ranker)
        ->check(CLI::IsMember({"peu", "frequency", "all-logits", "act-logits", "random", "last-peu"}))
        ->default_val("peu");
    c_an->add_option("--k-a", an.k_a, "Candidate pool size")->default_val(8);
    c_an->add_option("--transform", an.transform)
        ->check(CLI::IsMember({"raw", "sigmoid", "rectifier", "exp"}))
        ->default_val("rectifier");
    c_an->add_option("--threshold", an.threshold)
        ->check(CLI::IsMember({"adaptive", "fixed", "none"}))
        ->default_val("adaptive");
    c_an->add_option("--fixed-r", an.fixed_r, "Threshold for --threshold fixed")->check(CLI::Range(0.0, 1.0));
    c_an->add_option("--seed", an.seed, "Seed for --ranker random");
    c_an->add_flag("--per-domain-thresholds", an.per_domain,
                   "With several traces, threshold each trace with its own adaptive r");
    c_an->add_option("--out", an.out, "Output pattern (JSON)")->required();

    CompileArgs co;
    auto* c_co = app.add_subcommand("compile", "Select experts and build a manifest");
    c_co->add_option("--pattern", co.pattern)->check(CLI::ExistingFile);
    c_co->add_option("--per-layer", co.per_layer, "Keep the top M experts per layer");
    c_co->add_option("--last", co.last, "Keep the bottom M experts per layer");
    c_co->add_option("--global", co.global, "Keep the top B cells across all layers");
    c_co->add_option("--union", co.unions, "Union of selection files")->check(CLI::ExistingFile);
    c_co->add_option("--out", co.out, "Output selection (JSON)");
    c_co->add_option("--manifest", co.manifest, "Also write a compiled manifest");
    c_co->add_option("--model", co.model, "Model spec (JSON) for the manifest")->check(CLI::ExistingFile);
    c_co->add_option("--spec", co.spec, "Toy config; its shape is used for the manifest")->check(CLI::ExistingFile);

    EvalArgs ev;
    auto* c_ev = app.add_subcommand("eval", "Evaluate a pruned toy model against the full one");
    c_ev->add_option("--spec", ev.spec)->required()->check(CLI::ExistingFile);
    c_ev->add_option("--selection", ev.selection)->check(CLI::ExistingFile);
    c_ev->add_option("--manifest", ev.manifest)->check(CLI::ExistingFile);
    c_ev->add_option("--domain", ev.domain)->default_val(0);
    c_ev->add_option("--tokens", ev.tokens, "Number of tokens (default: from config)");
    c_ev->add_option("--seed", ev.seed, "Input stream seed (default: config evaluation_seed)");
    c_ev->add_option("--out", ev.out, "Report (JSON); stdout if omitted");

    ReportArgs rp;
    auto* c_rp = app.add_subcommand("report", "Write CSV reports");
    c_rp->require_subcommand(1);
    auto* c_sw = c_rp->add_subcommand("sweep", "Sparsity sweep over per-layer budgets");
    c_sw->add_option("--spec", rp.spec)->required()->check(CLI::ExistingFile);
    c_sw->add_option("--pattern", rp.pattern)->required()->check(CLI::ExistingFile);
    c_sw->add_option("--budgets", rp.budgets, "Per-layer budgets")->delimiter(',');
    c_sw->add_option("--label", rp.ranker_label, "Ranker name for the CSV")->default_val("peu");
    c_sw->add_option("--domain", rp.domain)->default_val(0);
    c_sw->add_option("--tokens", rp.tokens);
    c_sw->add_option("--seed", rp.seed);
    c_sw->add_option("--out", rp.out);
    auto* c_ov = c_rp->add_subcommand("overlap", "Top-k overlap between two patterns");
    c_ov->add_option("--pattern", rp.pattern)->required()->check(CLI::ExistingFile);
    c_ov->add_option("--pattern-b", rp.pattern_b)->required()->check(CLI::ExistingFile);
    c_ov->add_option("--ks", rp.ks)->delimiter(',');
    c_ov->add_option("--out", rp.out);
    auto* c_hm = c_rp->add_subcommand("heatmap", "Pattern scores as a layer x expert grid");
    c_hm->add_option("--pattern", rp.pattern)->required()->check(CLI::ExistingFile);
    c_hm->add_option("--out", rp.out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*c_tg) return run_trace_gen(tg);
        if (*c_an) return run_analyze(an);
        if (*c_co) return run_compile(co);
        if (*c_ev) return run_eval(ev);
        if (*c_sw) return run_sweep(rp);
        if (*c_ov) return run_overlap(rp);
        if (*c_hm) return run_heatmap(rp);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const mp::ArgumentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
