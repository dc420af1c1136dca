#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace hublid::table {

// Reads a comma-separated text file and calls on_row(row_number, fields)
// for every non-blank line. Row numbers are 1-based. Trailing '\r' is
// stripped so files written on Windows parse the same.
void for_each_row(const std::filesystem::path& path,
                  const std::function<void(std::size_t, const std::vector<std::string_view>&)>& on_row);

std::vector<std::string_view> split(std::string_view line, char sep = ',');

// Parse helpers; throw ParseError naming `source` and `row`.
double parse_real(std::string_view field, const std::string& source, std::size_t row);
std::int64_t parse_int(std::string_view field, const std::string& source, std::size_t row);

// Shortest representation that round-trips a double exactly.
std::string format_real(double v);

// Writes `contents` to `path` atomically enough for our purposes: a failure
// to open or write raises IoError.
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace hublid::table
