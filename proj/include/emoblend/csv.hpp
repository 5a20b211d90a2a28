#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace emoblend::csv {

struct Row {
    std::size_t line = 0;  // 1-based source line
    std::vector<std::string> fields;
};

/// Parsed CSV document. Lines starting with '#' are comments and are kept
/// separately so loaders can read header directives from them.
struct Document {
    std::vector<std::string> header;
    std::vector<Row> rows;
    std::vector<std::string> comments;
};

/// RFC-4180-ish splitting: double-quoted fields may contain commas and "".
std::vector<std::string> split_line(std::string_view line, std::size_t line_no);

Document read(std::istream& in);
Document read_file(const std::string& path);

/// Quote a field only when it needs it.
std::string escape(std::string_view field);
void write_row(std::ostream& out, const std::vector<std::string>& fields);

/// Shortest decimal representation that round-trips exactly.
std::string format_double(double value);
/// Fixed number of significant digits (printf %.*g).
std::string format_double(double value, int significant_digits);

double parse_double(std::string_view text, std::size_t line_no, std::string_view column);
std::optional<double> parse_optional_double(std::string_view text, std::size_t line_no,
                                            std::string_view column);

}  // namespace emoblend::csv
