#include "treeconcord/csv.h"

#include <fstream>
#include <sstream>

#include "treeconcord/error.h"

namespace treeconcord::csv {

Table parse(std::string_view text, bool skip_comments) {
  Table table;
  bool have_header = false;
  std::size_t line = 1;
  std::size_t pos = 0;
  // Strip a UTF-8 byte order mark.
  if (text.starts_with("\xEF\xBB\xBF")) pos = 3;

  while (pos < text.size()) {
    const std::size_t record_line = line;
    if (text[pos] == '\n' || text[pos] == '\r') {
      if (text[pos] == '\n') ++line;
      ++pos;
      continue;
    }
    if (skip_comments && text[pos] == '#') {
      while (pos < text.size() && text[pos] != '\n') ++pos;
      continue;
    }

    Record record;
    std::string field;
    bool in_quotes = false;
    bool done = false;
    while (!done) {
      if (pos >= text.size()) {
        if (in_quotes) {
          throw ValidationError("csv: unterminated quoted field starting on line " +
                                std::to_string(record_line));
        }
        record.push_back(std::move(field));
        break;
      }
      const char c = text[pos++];
      if (in_quotes) {
        if (c == '"') {
          if (pos < text.size() && text[pos] == '"') {
            field.push_back('"');
            ++pos;
          } else {
            in_quotes = false;
          }
        } else {
          if (c == '\n') ++line;
          field.push_back(c);
        }
        continue;
      }
      switch (c) {
        case '"':
          in_quotes = true;
          break;
        case ',':
          record.push_back(std::move(field));
          field.clear();
          break;
        case '\r':
          break;
        case '\n':
          ++line;
          record.push_back(std::move(field));
          done = true;
          break;
        default:
          field.push_back(c);
      }
    }

    if (!have_header) {
      table.header = std::move(record);
      have_header = true;
    } else {
      table.rows.push_back(std::move(record));
      table.line_numbers.push_back(record_line);
    }
  }
  return table;
}

Table read_file(const std::filesystem::path& path, bool skip_comments) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str(), skip_comments);
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) {
    return std::string(field);
  }
  std::string out = "\"";
  for (const char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string join(const Record& record) {
  std::string out;
  for (std::size_t i = 0; i < record.size(); ++i) {
    if (i) out.push_back(',');
    out += escape(record[i]);
  }
  return out;
}

}  // namespace treeconcord::csv
