#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace moeprune {

// Writes to a sibling temp file, then renames over the target.
// On failure the temp file is removed and IoError is thrown.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

// Shortest decimal text that parses back to the same value.
std::string format_number(double v);
std::string format_number(float v);

}  // namespace moeprune
