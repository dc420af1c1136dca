#include "hublid/table_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hublid/error.hpp"

namespace hublid::table {

void for_each_row(const std::filesystem::path& path,
                  const std::function<void(std::size_t, const std::vector<std::string_view>&)>& on_row) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    on_row(row, split(line));
  }
  if (in.bad()) throw IoError("read failure on " + path.string());
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

}  // namespace

double parse_real(std::string_view field, const std::string& source, std::size_t row) {
  const auto f = trim(field);
  double v = 0.0;
  const auto* first = f.data();
  const auto* last = f.data() + f.size();
  if (!f.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (f.empty() || ec != std::errc() || ptr != last)
    throw ParseError(source, row, "not a number: '" + std::string(f) + "'");
  if (!std::isfinite(v)) throw ParseError(source, row, "non-finite value: '" + std::string(f) + "'");
  return v;
}

std::int64_t parse_int(std::string_view field, const std::string& source, std::size_t row) {
  const auto f = trim(field);
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
  if (f.empty() || ec != std::errc() || ptr != f.data() + f.size())
    throw ParseError(source, row, "not an integer: '" + std::string(f) + "'");
  return v;
}

std::string format_real(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ec == std::errc() ? ptr : buf);
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  out.flush();
  if (!out) throw IoError("write failure on " + path.string());
}

}  // namespace hublid::table
