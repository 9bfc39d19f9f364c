#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace stcluster::io {

/// Fixed 15-significant-digit rendering used by every text output.
std::string format_double(double value);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Column position of `name`; throws MalformedInput when absent.
  std::size_t column(const std::string& name) const;
};

/// Comma-separated, no quoting, `.` decimal separator. Blank lines are
/// skipped and surrounding whitespace is trimmed from every field.
CsvTable read_csv(const std::filesystem::path& path);
CsvTable parse_csv(const std::string& text, const std::string& source = "<string>");

double parse_double(const std::string& field, const std::string& context);
long long parse_integer(const std::string& field, const std::string& context);
bool looks_like_integer(const std::string& field);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& content);

}  // namespace stcluster::io
