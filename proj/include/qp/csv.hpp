#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace qp::csv {

/// Shortest decimal text that round-trips to the same double; '.' separator
/// regardless of locale.
std::string number(double v);

/// Parses a whole cell as a double; throws FormatError otherwise.
double parse_number(const std::string& cell);

/// A CSV with a header row.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of `name` in the header; throws FormatError when absent.
  std::size_t column(const std::string& name) const;
  double number(std::size_t row, std::size_t col) const { return parse_number(rows[row][col]); }
};

/// Parses a comma-separated file with LF or CRLF line endings. Lines starting
/// with '#' are skipped. Every row must have as many cells as the header.
Table read(const std::filesystem::path& path);

}  // namespace qp::csv
