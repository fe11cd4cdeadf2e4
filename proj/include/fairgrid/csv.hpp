#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fairgrid {

// RFC 4180 table: header row plus string cells. Every row has exactly
// header.size() cells.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a header column, or nullopt.
  std::optional<std::size_t> column(std::string_view name) const;
};

// Throws DataError on ragged rows, unterminated quotes or an empty input.
CsvTable parse_csv(std::string_view text);
CsvTable read_csv(const std::filesystem::path& path);

std::string csv_escape(std::string_view field);
void write_csv_row(std::ostream& out, const std::vector<std::string>& fields);
void write_csv(std::ostream& out, const CsvTable& table);
void write_csv_file(const std::filesystem::path& path, const CsvTable& table);

// Shortest representation that parses back to the identical double.
std::string format_double(double value);
// Strict full-string parse; nullopt on trailing garbage or empty input.
std::optional<double> parse_double(std::string_view text);

}  // namespace fairgrid
