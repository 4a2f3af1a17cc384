#include "moeprune/trace.hpp"

#include "moeprune/error.hpp"
#include "moeprune/io.hpp"

#include <json.hpp>

#include <cmath>
#include <map>
#include <sstream>

namespace moeprune {

namespace {

// Token lines are parsed with float as the number type so that values are
// converted by strtof directly, which keeps the round trip bit-exact.
using FloatJson = nlohmann::basic_json<std::map, std::vector, std::string, bool,
                                       std::int64_t, std::uint64_t, float>;

std::string at_line(long line) { return "line " + std::to_string(line) + ": "; }

TraceHeader parse_header(const std::string& text, long line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(at_line(line) + "malformed header: " + e.what(), line);
    }
    TraceHeader h;
    try {
        h.model_id = j.at("model_id").get<std::string>();
        h.num_layers = j.at("num_layers").get<int>();
        h.num_routed_experts = j.at("num_routed_experts").get<int>();
        h.domain_tag = j.at("domain_tag").get<std::string>();
        h.token_count = j.at("token_count").get<std::int64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(at_line(line) + "bad header field: " + e.what(), line);
    }
    if (h.num_layers < 1) throw ShapeError(at_line(line) + "num_layers must be >= 1");
    if (h.num_routed_experts < 2)
        throw ShapeError(at_line(line) + "num_routed_experts must be >= 2");
    if (h.token_count < 0) throw ValueError(at_line(line) + "token_count must be >= 0");
    return h;
}

TokenRecord parse_token(const std::string& text, const TraceHeader& h, long line) {
    FloatJson j;
    try {
        j = FloatJson::parse(text);
    } catch (const FloatJson::parse_error& e) {
        throw ParseError(at_line(line) + "malformed token record: " + e.what(), line);
    } catch (const FloatJson::out_of_range&) {
        // A literal outside float range cannot be stored as a finite logit.
        throw ValueError(at_line(line) + "non-finite logit");
    }
    TokenRecord rec;
    const FloatJson* layers = nullptr;
    try {
        rec.token_index = j.at("token_index").get<std::int64_t>();
        layers = &j.at("layers");
    } catch (const FloatJson::exception& e) {
        throw ParseError(at_line(line) + "bad token record: " + e.what(), line);
    }
    if (!layers->is_array() || static_cast<int>(layers->size()) != h.num_layers)
        throw ShapeError(at_line(line) + "token " + std::to_string(rec.token_index) +
                         ": expected " + std::to_string(h.num_layers) + " layers");
    rec.logits.resize(h.num_layers, h.num_routed_experts);
    for (int l = 0; l < h.num_layers; ++l) {
        const auto& row = (*layers)[static_cast<std::size_t>(l)];
        if (!row.is_array() || static_cast<int>(row.size()) != h.num_routed_experts)
            throw ShapeError(at_line(line) + "token " + std::to_string(rec.token_index) +
                             ", layer " + std::to_string(l) + ": expected " +
                             std::to_string(h.num_routed_experts) + " logits, got " +
                             std::to_string(row.is_array() ? row.size() : 0));
        for (int i = 0; i < h.num_routed_experts; ++i) {
            const auto& v = row[static_cast<std::size_t>(i)];
            if (!v.is_number())
                throw ParseError(at_line(line) + "non-numeric logit", line);
            const float f = v.get<float>();
            if (!std::isfinite(f))
                throw ValueError(at_line(line) + "token " + std::to_string(rec.token_index) +
                                 ", layer " + std::to_string(l) + ", expert " +
                                 std::to_string(i) + ": logit is not a finite float");
            rec.logits(l, i) = f;
        }
    }
    return rec;
}

void append_token(std::string& out, const TokenRecord& rec) {
    out += "{\"token_index\":";
    out += std::to_string(rec.token_index);
    out += ",\"layers\":[";
    for (Eigen::Index l = 0; l < rec.logits.rows(); ++l) {
        if (l) out += ',';
        out += '[';
        for (Eigen::Index i = 0; i < rec.logits.cols(); ++i) {
            if (i) out += ',';
            out += format_number(rec.logits(l, i));
        }
        out += ']';
    }
    out += "]}\n";
}

}  // namespace

void validate(const RouterTrace& t) {
    const auto& h = t.header;
    if (h.num_layers < 1) throw ShapeError("num_layers must be >= 1");
    if (h.num_routed_experts < 2) throw ShapeError("num_routed_experts must be >= 2");
    if (h.token_count != static_cast<std::int64_t>(t.tokens.size()))
        throw ShapeError("token_count " + std::to_string(h.token_count) + " does not match " +
                         std::to_string(t.tokens.size()) + " token records");
    for (std::size_t k = 0; k < t.tokens.size(); ++k) {
        const auto& rec = t.tokens[k];
        if (rec.token_index != static_cast<std::int64_t>(k))
            throw ValueError("token_index " + std::to_string(rec.token_index) +
                             " at position " + std::to_string(k) + " is not contiguous");
        if (rec.logits.rows() != h.num_layers || rec.logits.cols() != h.num_routed_experts)
            throw ShapeError("token " + std::to_string(k) + ": logit matrix is " +
                             std::to_string(rec.logits.rows()) + "x" +
                             std::to_string(rec.logits.cols()));
        if (!rec.logits.allFinite())
            throw ValueError("token " + std::to_string(k) + ": non-finite logit");
    }
}

TraceReader::TraceReader(const std::filesystem::path& path) : path_(path), in_(path) {
    if (!in_) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in_, line)) throw ParseError(at_line(1) + "missing header", 1);
    header_ = parse_header(line, 1);
}

std::optional<TokenRecord> TraceReader::next() {
    std::string line;
    while (std::getline(in_, line)) {
        ++line_no_;
        if (line.empty()) continue;
        TokenRecord rec = parse_token(line, header_, line_no_);
        if (rec.token_index != seen_)
            throw ValueError(at_line(line_no_) + "token_index " +
                             std::to_string(rec.token_index) + " expected " +
                             std::to_string(seen_));
        ++seen_;
        return rec;
    }
    if (seen_ != header_.token_count)
        throw ShapeError(path_.string() + ": header token_count " +
                         std::to_string(header_.token_count) + " but body has " +
                         std::to_string(seen_) + " records");
    return std::nullopt;
}

RouterTrace read_trace(const std::filesystem::path& path) {
    TraceReader reader(path);
    RouterTrace t;
    t.header = reader.header();
    t.tokens.reserve(static_cast<std::size_t>(t.header.token_count));
    while (auto rec = reader.next()) t.tokens.push_back(std::move(*rec));
    return t;
}

std::string format_trace(const RouterTrace& trace) {
    validate(trace);
    nlohmann::ordered_json h;
    h["model_id"] = trace.header.model_id;
    h["num_layers"] = trace.header.num_layers;
    h["num_routed_experts"] = trace.header.num_routed_experts;
    h["domain_tag"] = trace.header.domain_tag;
    h["token_count"] = trace.header.token_count;
    std::string out = h.dump();
    out += '\n';
    for (const auto& rec : trace.tokens) append_token(out, rec);
    return out;
}

void write_trace(const RouterTrace& trace, const std::filesystem::path& path) {
    write_file_atomic(path, format_trace(trace));
}

RouterTrace concat_traces(const std::vector<RouterTrace>& traces) {
    if (traces.empty()) throw ArgumentError("concat_traces needs at least one trace");
    RouterTrace out;
    out.header = traces.front().header;
    std::string tag;
    std::int64_t next = 0;
    for (const auto& t : traces) {
        if (t.header.num_layers != out.header.num_layers ||
            t.header.num_routed_experts != out.header.num_routed_experts)
            throw IncompatibleError("cannot concatenate traces of shape " +
                                    std::to_string(t.header.num_layers) + "x" +
                                    std::to_string(t.header.num_routed_experts) + " and " +
                                    std::to_string(out.header.num_layers) + "x" +
                                    std::to_string(out.header.num_routed_experts));
        if (!tag.empty()) tag += '+';
        tag += t.header.domain_tag;
        for (const auto& rec : t.tokens) {
            TokenRecord r = rec;
            r.token_index = next++;
            out.tokens.push_back(std::move(r));
        }
    }
    out.header.domain_tag = tag;
    out.header.token_count = next;
    return out;
}

}  // namespace moeprune
