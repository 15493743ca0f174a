#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dib::csv {

struct Record {
  std::size_t line = 0;  // 1-based line where the record starts
  std::vector<std::string> fields;
};

struct Document {
  std::vector<std::string> header;
  std::vector<Record> records;
};

// RFC 4180: comma separated, double-quote quoting with "" escapes, CRLF or LF
// line endings, quoted fields may span lines. A UTF-8 byte order mark is
// skipped. Blank lines are ignored.
Document parse(std::string_view text);
Document read_file(const std::filesystem::path& path);

// Quotes a field when it contains a comma, quote, or line break.
std::string escape(std::string_view field);
void write_row(std::ostream& out, std::span<const std::string> fields);

// 17 significant digits, enough to round-trip any double; "nan"/"inf" for
// non-finite values.
std::string format_double(double value);

}  // namespace dib::csv
