#pragma once

// Minimal RFC-4180 CSV reading/writing. UTF-8 passthrough, '.' decimal,
// quoted fields with doubled quotes, tolerates CRLF line endings.

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hetscore/errors.hpp"

namespace hetscore::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;  // data rows, header excluded
};

inline std::vector<std::string> parse_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  std::size_t i = 0;
  const std::size_t n = line.size();
  out.reserve(8);
  while (i <= n) {
    if (i == n) {
      if (quoted) throw ValidationError("line " + std::to_string(line_no) + ": unterminated quoted field");
      out.push_back(field);
      break;
    }
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < n && line[i + 1] == '"') { field.push_back('"'); i += 2; continue; }
        quoted = false;
        ++i;
        continue;
      }
      field.push_back(c);
      ++i;
    } else if (c == '"') {
      quoted = true;
      ++i;
    } else if (c == ',') {
      out.push_back(field);
      field.clear();
      ++i;
    } else {
      field.push_back(c);
      ++i;
    }
  }
  return out;
}

inline Table read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  Table t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() && in.peek() == std::char_traits<char>::eof()) break;
    auto fields = parse_line(line, line_no);
    if (line_no == 1) {
      t.header = std::move(fields);
    } else {
      if (fields.size() != t.header.size())
        throw ValidationError("line " + std::to_string(line_no) + ": expected " +
                              std::to_string(t.header.size()) + " fields, found " +
                              std::to_string(fields.size()));
      t.rows.push_back(std::move(fields));
    }
  }
  if (t.header.empty()) throw ValidationError("'" + path + "': empty file (no header)");
  return t;
}

inline std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out.push_back('"');
  return out;
}

// Shortest round-trip decimal representation.
inline std::string format_double(double x) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, std::size_t line_no, const std::string& column) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last)
    throw ValidationError("line " + std::to_string(line_no) + ": non-numeric value '" + s +
                          "' in column '" + column + "'");
  return v;
}

inline void write_row(std::ostream& os, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) os << ',';
    os << quote_if_needed(fields[i]);
  }
  os << '\n';
}

}  // namespace hetscore::csv
