#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace schoolrun::csv {

// Minimal comma-separated reader for the artifact schemas: no quoting, no
// embedded commas, optional trailing '\r'.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Column position by name; throws ParseError naming the file when absent.
  std::size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const;
  std::string source;
};

Table read(const std::filesystem::path& path);

// Streams rows without materializing the table. The callback receives the
// 1-based data line number and the split fields.
void for_each_row(const std::filesystem::path& path,
                  const std::function<void(const std::vector<std::string>& header)>& on_header,
                  const std::function<void(std::size_t line, const std::vector<std::string_view>&)>& on_row);

void split(std::string_view line, std::vector<std::string_view>& out);

double to_double(std::string_view field, std::string_view context);
long long to_int(std::string_view field, std::string_view context);

// Shortest representation that round-trips exactly.
std::string format_double(double value);

}  // namespace schoolrun::csv
