#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace covhmm::io {

// Writes to a sibling temporary file and renames it over `path`, so a
// failed run never leaves partial output behind.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

std::vector<std::string_view> split(std::string_view line, char sep);
std::string_view trim(std::string_view s);

double parse_double(std::string_view field, std::string_view what);

// Shortest text that reads back to the same double.
std::string format_double(double x);
// Fixed number of decimals, for human-facing tables.
std::string format_fixed(double x, int decimals);

}  // namespace covhmm::io
