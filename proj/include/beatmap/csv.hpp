#pragma once

// Minimal RFC 4180 style CSV helpers: quoting on write, quoted fields on read.

#include <charconv>
#include <istream>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace beatmap::csv {

class CsvError : public std::runtime_error {
public:
    CsvError(const std::string& file, std::size_t row, const std::string& detail)
        : std::runtime_error(file + ": row " + std::to_string(row) + ": " + detail), file_(file), row_(row) {}

    const std::string& file() const noexcept { return file_; }
    std::size_t row() const noexcept { return row_; }

private:
    std::string file_;
    std::size_t row_;
};

inline std::string quote(std::string_view field) {
    if (field.find_first_of(",\"\n\r") == std::string_view::npos) {
        return std::string(field);
    }
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    out += '"';
    return out;
}

/// Shortest decimal text that round-trips the double exactly.
inline std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

inline void write_row(std::ostream& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i > 0) {
            out << ',';
        }
        out << quote(fields[i]);
    }
    out << '\n';
}

/// Splits one line into fields. Returns nullopt on an unterminated quote.
inline std::optional<std::vector<std::string>> split_row(std::string_view line) {
    std::vector<std::string> fields;
    std::string current;
    bool in_quotes = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    current += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                current += c;
            }
        } else if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            fields.push_back(std::move(current));
            current.clear();
        } else if (c != '\r') {
            current += c;
        }
    }
    if (in_quotes) {
        return std::nullopt;
    }
    fields.push_back(std::move(current));
    return fields;
}

/// Reads all rows of a CSV stream. Rows never span lines in our files.
inline std::vector<std::vector<std::string>> read_all(std::istream& in, const std::string& file_name) {
    std::vector<std::vector<std::string>> rows;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) {
            continue;
        }
        auto fields = split_row(line);
        if (!fields) {
            throw CsvError(file_name, row, "unterminated quoted field");
        }
        rows.push_back(std::move(*fields));
    }
    return rows;
}

template <typename T>
T parse_field(std::string_view text, const std::string& file, std::size_t row, std::string_view column) {
    T value{};
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw CsvError(file, row, "bad value '" + std::string(text) + "' in column " + std::string(column));
    }
    return value;
}

} // namespace beatmap::csv
