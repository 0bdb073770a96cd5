#ifndef TREECONCORD_CSV_H_
#define TREECONCORD_CSV_H_

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace treeconcord::csv {

using Record = std::vector<std::string>;

struct Table {
  Record header;
  std::vector<Record> rows;
  // 1-based line number of each row in the source, for error messages.
  std::vector<std::size_t> line_numbers;
};

// Parses comma-separated text with optional double-quoted fields ("" escapes
// a quote; quoted fields may span lines). Blank lines are skipped, and so are
// lines starting with '#' when `skip_comments` is set.
Table parse(std::string_view text, bool skip_comments = false);

Table read_file(const std::filesystem::path& path, bool skip_comments = false);

// Quotes a field only when it contains a comma, quote, or newline.
std::string escape(std::string_view field);

std::string join(const Record& record);

}  // namespace treeconcord::csv

#endif  // TREECONCORD_CSV_H_
