#pragma once

#include <string>
#include <vector>

namespace fbgpr {

// Formats with enough digits to round-trip a double exactly.
std::string format_double(double v);

// Quotes a CSV field if it contains a comma, quote, or newline (RFC 4180).
std::string csv_escape(const std::string& field);

// Joins escaped fields with commas; includes the trailing newline.
std::string csv_row(const std::vector<std::string>& fields);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 if absent
};

// Parses RFC 4180 CSV text: quoted fields, doubled quotes, embedded commas
// and newlines.  CRLF and LF line endings are both accepted.
CsvTable parse_csv(const std::string& text);

CsvTable read_csv_file(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

// Pads columns with spaces for terminal display.
std::string render_table(const std::vector<std::string>& header,
                         const std::vector<std::vector<std::string>>& rows);

}  // namespace fbgpr
