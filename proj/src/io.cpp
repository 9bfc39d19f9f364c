#include "stcluster/io.hpp"

#include "stcluster/types.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace stcluster::io {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::string format_double(double value) {
  if (value == 0.0) return "0";  // folds -0
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.15g", value);
  return buf;
}

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw Error(ErrorCode::MalformedInput, "missing CSV column '" + name + "'");
  return std::size_t(it - header.begin());
}

CsvTable parse_csv(const std::string& text, const std::string& source) {
  CsvTable table;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    auto fields = split(line);
    if (table.header.empty()) {
      table.header = std::move(fields);
      continue;
    }
    if (fields.size() != table.header.size())
      throw Error(ErrorCode::MalformedInput, source + ":" + std::to_string(line_no) + ": expected " +
                                                 std::to_string(table.header.size()) + " fields, got " +
                                                 std::to_string(fields.size()));
    table.rows.push_back(std::move(fields));
  }
  if (table.header.empty()) throw Error(ErrorCode::MalformedInput, source + ": empty CSV");
  return table;
}

CsvTable read_csv(const std::filesystem::path& path) { return parse_csv(read_text(path), path.string()); }

double parse_double(const std::string& field, const std::string& context) {
  if (field.empty()) throw Error(ErrorCode::MalformedInput, context + ": empty numeric field");
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(field.c_str(), &end);
  if (end != field.c_str() + field.size() || errno == ERANGE || !std::isfinite(v))
    throw Error(ErrorCode::MalformedInput, context + ": not a finite number: '" + field + "'");
  return v;
}

bool looks_like_integer(const std::string& field) {
  if (field.empty()) return false;
  std::size_t start = (field[0] == '-' || field[0] == '+') ? 1 : 0;
  if (start == field.size()) return false;
  return std::all_of(field.begin() + long(start), field.end(), [](char c) { return c >= '0' && c <= '9'; });
}

long long parse_integer(const std::string& field, const std::string& context) {
  const double v = parse_double(field, context);
  if (v != std::floor(v) || std::abs(v) > 9.0e15)
    throw Error(ErrorCode::MalformedInput, context + ": not an integer: '" + field + "'");
  return static_cast<long long>(v);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw Error(ErrorCode::Io, "write failed for '" + path.string() + "'");
}

}  // namespace stcluster::io
