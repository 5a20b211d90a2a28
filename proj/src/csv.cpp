#include "emoblend/csv.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>

#include "emoblend/error.hpp"

namespace emoblend::csv {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

}  // namespace

std::vector<std::string> split_line(std::string_view line, std::size_t line_no) {
    std::vector<std::string> out;
    std::string field;
    bool in_quotes = false;
    bool was_quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"') {
            in_quotes = true;
            was_quoted = true;
        } else if (c == ',') {
            out.push_back(was_quoted ? field : std::string(trim(field)));
            field.clear();
            was_quoted = false;
        } else {
            field.push_back(c);
        }
    }
    if (in_quotes) throw ParseError("unterminated quoted field", line_no);
    out.push_back(was_quoted ? field : std::string(trim(field)));
    return out;
}

Document read(std::istream& in) {
    Document doc;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
        const auto stripped = trim(line);
        if (stripped.empty()) continue;
        if (stripped.front() == '#') {
            doc.comments.emplace_back(stripped);
            continue;
        }
        auto fields = split_line(line, line_no);
        if (!have_header) {
            doc.header = std::move(fields);
            have_header = true;
        } else {
            if (fields.size() != doc.header.size()) {
                throw ParseError("expected " + std::to_string(doc.header.size()) + " fields, got " +
                                     std::to_string(fields.size()),
                                 line_no);
            }
            doc.rows.push_back(Row{line_no, std::move(fields)});
        }
    }
    return doc;
}

Document read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    return read(in);
}

std::string escape(std::string_view field) {
    if (field.find_first_of(",\"\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out.push_back('"');
    return out;
}

void write_row(std::ostream& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out << ',';
        out << escape(fields[i]);
    }
    out << '\n';
}

std::string format_double(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    if (ec != std::errc{}) throw Error("cannot format number");
    return std::string(buf, ptr);
}

std::string format_double(double value, int significant_digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", significant_digits, value);
    return buf;
}

double parse_double(std::string_view text, std::size_t line_no, std::string_view column) {
    text = trim(text);
    double value = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    if (!text.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (text.empty() || ec != std::errc{} || ptr != last || !std::isfinite(value)) {
        throw ParseError("column '" + std::string(column) + "': not a number: '" + std::string(text) + "'",
                         line_no);
    }
    return value;
}

std::optional<double> parse_optional_double(std::string_view text, std::size_t line_no,
                                            std::string_view column) {
    if (trim(text).empty()) return std::nullopt;
    return parse_double(text, line_no, column);
}

}  // namespace emoblend::csv
