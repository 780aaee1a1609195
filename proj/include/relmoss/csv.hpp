// SPDX-License-Identifier: Apache-2.0
#pragma once

// Minimal RFC-4180 style reader/writer: comma separator, double-quote
// escaping (""), quoted fields may span lines.

#include <charconv>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace relmoss::csv {

struct Field {
  std::string text;
  bool quoted = false;
};

using Record = std::vector<Field>;

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Reads one record; returns false at end of input. `line` is advanced by the
// number of physical lines consumed.
inline bool read_record(std::istream& in, Record& out, std::size_t& line) {
  out.clear();
  if (in.peek() == std::char_traits<char>::eof()) return false;
  Field cur;
  bool in_quotes = false;
  bool after_quote = false;
  ++line;
  for (;;) {
    const int ci = in.get();
    if (ci == std::char_traits<char>::eof()) {
      if (in_quotes) throw ParseError("unterminated quoted field at line " + std::to_string(line));
      out.push_back(std::move(cur));
      return true;
    }
    const char c = static_cast<char>(ci);
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get();
          cur.text.push_back('"');
        } else {
          in_quotes = false;
          after_quote = true;
        }
      } else {
        if (c == '\n') ++line;
        cur.text.push_back(c);
      }
      continue;
    }
    if (c == ',') {
      out.push_back(std::move(cur));
      cur = Field{};
      after_quote = false;
    } else if (c == '\n') {
      out.push_back(std::move(cur));
      return true;
    } else if (c == '\r') {
      if (in.peek() == '\n') in.get();
      out.push_back(std::move(cur));
      return true;
    } else if (c == '"' && cur.text.find_first_not_of(" \t") == std::string::npos && !after_quote) {
      cur.text.clear();
      cur.quoted = true;
      in_quotes = true;
    } else {
      if (after_quote && c != ' ' && c != '\t') {
        throw ParseError("unexpected character after closing quote at line " + std::to_string(line));
      }
      if (!after_quote) cur.text.push_back(c);
    }
  }
}

inline bool needs_quotes(std::string_view s) {
  return s.find_first_of(",\"\r\n") != std::string_view::npos || s.empty() ||
         s.front() == ' ' || s.back() == ' ';
}

inline void write_field(std::ostream& out, std::string_view s, bool force_quote = false) {
  if (!force_quote && !needs_quotes(s)) {
    out << s;
    return;
  }
  out << '"';
  for (char c : s) {
    if (c == '"') out << '"';
    out << c;
  }
  out << '"';
}

// Shortest round-trip decimal form.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace relmoss::csv
