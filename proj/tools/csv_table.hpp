#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace rbcli {

/// Malformed input; the message names rows and columns.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Header plus raw cell text, comma-delimited, double-quoted fields allowed.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
};

CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::string& path);

/// Numeric columns for the used names. Missing ("", NA, NaN) or non-numeric cells in any used
/// column are rejected, listing the 1-based data rows.
std::vector<std::vector<double>> numeric_columns(const CsvTable& table,
                                                 const std::vector<std::string>& names);

std::string read_file(const std::string& path);
std::string format_number(double v);
/// RFC 4180 quoting when needed.
std::string csv_field(const std::string& s);

}  // namespace rbcli
