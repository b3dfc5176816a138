#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace dbb {

// Shortest decimal string that round-trips the exact double (std::to_chars),
// so repeated runs emit byte-identical files at full 64-bit precision.
std::string format_double(double v);

double parse_double(const std::string& s);
long long parse_int(const std::string& s);
std::uint64_t parse_u64(const std::string& s);
bool parse_bool(const std::string& s);

std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char sep);

// Minimal CSV (no quoting; fields never contain commas here). Lines starting
// with '#' are annotations and are skipped by the reader.
struct CsvTable {
  std::vector<std::string> comments;  // leading '#' lines, verbatim
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

void write_csv(const std::filesystem::path& file, const CsvTable& table);
CsvTable read_csv(const std::filesystem::path& file);

}  // namespace dbb
