#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace bc {

// 17 significant digits, general notation.
std::string format_double(double v);

// RFC 4180 quoting for a single field.
std::string csv_field(std::string_view s);

// Joins already-formatted fields with commas and terminates with CRLF.
std::string csv_row(const std::vector<std::string>& fields);

// Writes `contents` to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path,
                       std::string_view contents);

std::string read_file(const std::filesystem::path& path);

}  // namespace bc
