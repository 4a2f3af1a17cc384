#pragma once

#include "moeprune/manifest.hpp"
#include "moeprune/patterns.hpp"
#include "moeprune/peu.hpp"
#include "moeprune/rankers.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace moeprune {

inline constexpr const char* kTraceSchema = "trace-jsonl/1";
inline constexpr const char* kPatternSchema = "pattern/1";
inline constexpr const char* kSelectionSchema = "selection/1";
inline constexpr const char* kManifestSchema = "premoe-manifest/1";

// Pattern files record the ranker only when it is not plain PEU.
std::string format_pattern(const ComputationalPattern& p,
                           std::optional<RankerKind::Kind> ranker = std::nullopt);
ComputationalPattern parse_pattern(const std::string& text,
                                   std::optional<RankerKind::Kind>* ranker = nullptr);
void write_pattern(const ComputationalPattern& p, const std::filesystem::path& path,
                   std::optional<RankerKind::Kind> ranker = std::nullopt);
ComputationalPattern read_pattern(const std::filesystem::path& path);

std::string format_selection(const ExpertSelection& s);
ExpertSelection parse_selection(const std::string& text);
void write_selection(const ExpertSelection& s, const std::filesystem::path& path);
ExpertSelection read_selection(const std::filesystem::path& path);

std::string format_model_spec(const ModelSpec& spec);
ModelSpec parse_model_spec(const std::string& text);

std::string format_manifest(const CompiledManifest& m);
// Rebuilds the manifest from its spec and keep lists and rejects the file if
// any derived field disagrees.
CompiledManifest parse_manifest(const std::string& text);
void write_manifest(const CompiledManifest& m, const std::filesystem::path& path);
CompiledManifest read_manifest(const std::filesystem::path& path);

}  // namespace moeprune
