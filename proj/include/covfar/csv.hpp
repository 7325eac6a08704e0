#pragma once

// Minimal RFC-4180 CSV reader/writer plus number<->string helpers.
// Doubles are written with std::to_chars (shortest round-trip form) so a
// write/read cycle reproduces values bit for bit.

#include <charconv>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "covfar/errors.hpp"

namespace covfar::csv {

struct Document {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    // 1-based source line of each data row, for error messages
    std::vector<std::size_t> row_lines;
};

namespace detail {

inline bool needs_quoting(std::string_view field) {
    return field.find_first_of(",\"\r\n") != std::string_view::npos;
}

} // namespace detail

inline std::string format_field(std::string_view field) {
    if (!detail::needs_quoting(field)) return std::string(field);
    std::string out;
    out.reserve(field.size() + 2);
    out.push_back('"');
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

inline void write_row(std::ostream& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i > 0) out.put(',');
        out << format_field(fields[i]);
    }
    out.put('\n');
}

// Parses the whole stream. Quoted fields may contain commas, escaped quotes
// and newlines. The first record is treated as the header.
inline Document read(std::istream& in) {
    Document doc;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool any_char = false;
    std::size_t line = 1;
    std::size_t record_line = 1;

    auto end_field = [&]() {
        record.push_back(std::move(field));
        field.clear();
    };
    auto end_record = [&]() {
        end_field();
        if (doc.header.empty()) {
            doc.header = std::move(record);
        } else {
            doc.rows.push_back(std::move(record));
            doc.row_lines.push_back(record_line);
        }
        record.clear();
        any_char = false;
        record_line = line;
    };

    char c;
    while (in.get(c)) {
        if (in_quotes) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field.push_back('"');
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
            any_char = true;
            break;
        case ',':
            end_field();
            any_char = true;
            break;
        case '\r':
            break;
        case '\n':
            ++line;
            if (any_char || !field.empty() || !record.empty()) end_record();
            record_line = line;
            break;
        default:
            field.push_back(c);
            any_char = true;
            break;
        }
    }
    if (in_quotes) throw Error::validation("csv: unterminated quoted field");
    if (any_char || !field.empty() || !record.empty()) end_record();
    return doc;
}

inline std::string to_string(double value) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

inline std::string to_string(long long value) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text, const std::string& context) {
    double value = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto res = std::from_chars(first, last, value);
    if (res.ec != std::errc() || res.ptr != last) {
        throw Error::validation(context + ": cannot parse '" + std::string(text) +
                                "' as a number");
    }
    return value;
}

inline long long parse_int(std::string_view text, const std::string& context) {
    long long value = 0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw Error::validation(context + ": cannot parse '" + std::string(text) +
                                "' as an integer");
    }
    return value;
}

} // namespace covfar::csv
