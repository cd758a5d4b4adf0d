#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace didcatt {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header column, or nullopt.
  std::optional<std::size_t> find(std::string_view name) const;
  /// Index of a header column; throws Error(module, op) if absent.
  std::size_t require(std::string_view name, const char* module,
                      const char* op) const;
};

/// RFC-4180-style reader: comma separated, double-quoted fields, header row.
CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(std::string_view text);

void write_csv(const std::filesystem::path& path, const CsvTable& table);
std::string to_csv_string(const CsvTable& table);

/// Shortest text that round-trips the double exactly ("%.17g").
std::string format_double(double x);
std::optional<double> parse_double(std::string_view text);

}  // namespace didcatt
