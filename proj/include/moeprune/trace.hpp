#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace moeprune {

// One row per layer, one column per routed expert.
using LogitMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct TraceHeader {
    std::string model_id;
    int num_layers = 0;
    int num_routed_experts = 0;
    std::string domain_tag;
    std::int64_t token_count = 0;
};

struct TokenRecord {
    std::int64_t token_index = 0;
    LogitMatrix logits;  // L x N_r
};

struct RouterTrace {
    TraceHeader header;
    std::vector<TokenRecord> tokens;

    int num_layers() const { return header.num_layers; }
    int num_experts() const { return header.num_routed_experts; }
    std::size_t size() const { return tokens.size(); }
};

// Throws ShapeError / ValueError when an invariant is violated.
void validate(const RouterTrace& trace);

// Streaming reader: holds the header and one token record at a time.
class TraceReader {
public:
    explicit TraceReader(const std::filesystem::path& path);

    const TraceHeader& header() const { return header_; }
    // Returns std::nullopt once the body is exhausted; verifies token_count then.
    std::optional<TokenRecord> next();

private:
    std::filesystem::path path_;
    std::ifstream in_;
    TraceHeader header_;
    long line_no_ = 1;
    std::int64_t seen_ = 0;
};

RouterTrace read_trace(const std::filesystem::path& path);
void write_trace(const RouterTrace& trace, const std::filesystem::path& path);

// Serialises a trace to the JSONL text exactly as write_trace would.
std::string format_trace(const RouterTrace& trace);

RouterTrace concat_traces(const std::vector<RouterTrace>& traces);

}  // namespace moeprune
