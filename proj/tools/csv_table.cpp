#include "csv_table.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace rbcli {
namespace {

std::string join_rows(const std::vector<std::size_t>& rows) {
  std::string out;
  const std::size_t shown = std::min<std::size_t>(rows.size(), 20);
  for (std::size_t k = 0; k < shown; ++k) out += (k ? "," : "") + std::to_string(rows[k]);
  if (rows.size() > shown) out += ",... (" + std::to_string(rows.size()) + " rows)";
  return out;
}

bool is_missing(const std::string& s) {
  return s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == "null";
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == name) return j;
  }
  throw InputError("column '" + name + "' not found in the header");
}

CsvTable parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false, field_started = false;
  std::size_t i = 0;
  if (text.compare(0, 3, "\xEF\xBB\xBF") == 0) i = 3;
  auto end_field = [&] {
    record.push_back(quoted ? field : trim(field));
    field.clear();
    quoted = false;
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
    record.clear();
  };
  bool in_quotes = false;
  for (; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = quoted = field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      end_record();
    } else if (c == '\r') {
      if (i + 1 < text.size() && text[i + 1] == '\n') continue;
      end_record();
    } else {
      if (c != ' ' && c != '\t') field_started = true;
      field += c;
    }
  }
  if (in_quotes) throw InputError("unterminated quoted field");
  if (!field.empty() || !record.empty()) end_record();
  if (records.empty()) throw InputError("CSV input is empty");

  CsvTable t;
  t.header = std::move(records.front());
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != t.header.size()) {
      throw InputError("row " + std::to_string(r) + " has " + std::to_string(records[r].size()) +
                       " fields, header has " + std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(records[r]));
  }
  return t;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

CsvTable read_csv(const std::string& path) { return parse_csv(read_file(path)); }

std::vector<std::vector<double>> numeric_columns(const CsvTable& table,
                                                 const std::vector<std::string>& names) {
  std::vector<std::vector<double>> out;
  std::string problems;
  for (const auto& name : names) {
    const std::size_t j = table.column(name);
    std::vector<double> col;
    std::vector<std::size_t> missing, bad;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      const std::string& cell = table.rows[r][j];
      double v = 0.0;
      if (is_missing(cell)) {
        missing.push_back(r + 1);
      } else {
        const char* b = cell.data();
        const char* e = b + cell.size();
        if (*b == '+') ++b;
        const auto res = std::from_chars(b, e, v);
        if (res.ec != std::errc() || res.ptr != e || !std::isfinite(v)) bad.push_back(r + 1);
      }
      col.push_back(v);
    }
    if (!missing.empty()) problems += "column '" + name + "' has missing values in rows " + join_rows(missing) + "; ";
    if (!bad.empty()) problems += "column '" + name + "' has non-numeric values in rows " + join_rows(bad) + "; ";
    out.push_back(std::move(col));
  }
  if (!problems.empty()) throw InputError(problems.substr(0, problems.size() - 2));
  return out;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace rbcli
