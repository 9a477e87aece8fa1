#include "schoolrun/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "schoolrun/error.hpp"

namespace schoolrun::csv {

namespace {

std::string_view trim_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kMissingArtifact, "cannot open '" + path.string() + "'");
  }
  return in;
}

}  // namespace

void split(std::string_view line, std::vector<std::string_view>& out) {
  out.clear();
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::size_t Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw Error(ErrorCode::kParseError,
              "'" + source + "' has no column '" + std::string(name) + "'");
}

bool Table::has_column(std::string_view name) const {
  for (const auto& h : header) {
    if (h == name) return true;
  }
  return false;
}

void for_each_row(
    const std::filesystem::path& path,
    const std::function<void(const std::vector<std::string>&)>& on_header,
    const std::function<void(std::size_t, const std::vector<std::string_view>&)>& on_row) {
  std::ifstream in = open_or_throw(path);
  std::string line;
  std::vector<std::string_view> fields;
  if (!std::getline(in, line)) {
    throw Error(ErrorCode::kParseError, "'" + path.string() + "' is empty");
  }
  split(trim_cr(line), fields);
  std::vector<std::string> header(fields.begin(), fields.end());
  on_header(header);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = trim_cr(line);
    if (view.empty()) continue;
    split(view, fields);
    if (fields.size() != header.size()) {
      throw Error(ErrorCode::kParseError, "'" + path.string() + "' line " +
                                              std::to_string(line_no) + ": expected " +
                                              std::to_string(header.size()) + " fields, got " +
                                              std::to_string(fields.size()));
    }
    on_row(line_no, fields);
  }
}

Table read(const std::filesystem::path& path) {
  Table table;
  table.source = path.string();
  for_each_row(
      path, [&](const std::vector<std::string>& header) { table.header = header; },
      [&](std::size_t, const std::vector<std::string_view>& fields) {
        table.rows.emplace_back(fields.begin(), fields.end());
      });
  return table;
}

double to_double(std::string_view field, std::string_view context) {
  double value = 0.0;
  const char* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end || field.empty()) {
    throw Error(ErrorCode::kParseError,
                std::string(context) + ": '" + std::string(field) + "' is not a number");
  }
  return value;
}

long long to_int(std::string_view field, std::string_view context) {
  long long value = 0;
  const char* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end || field.empty()) {
    throw Error(ErrorCode::kParseError,
                std::string(context) + ": '" + std::string(field) + "' is not an integer");
  }
  return value;
}

std::string format_double(double value) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

}  // namespace schoolrun::csv
