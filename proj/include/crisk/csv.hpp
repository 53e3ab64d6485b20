#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "crisk/errors.hpp"

namespace crisk {

// Minimal CSV handling: comma separated, header row required, UTF-8, '.'
// decimal separator, no embedded commas or quoting.
struct CsvTable {
    std::string source;  // for error messages
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;  // data rows, header excluded

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    }

    int require_column(const std::string& name) const {
        const int idx = column(name);
        if (idx < 0)
            throw input_error(source + ": missing required column '" + name + "'");
        return idx;
    }

    // 1-based data row number as reported to users (header is row 1).
    std::string row_label(std::size_t row) const {
        return source + " row " + std::to_string(row + 2);
    }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

}  // namespace detail

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open file: " + path);
    CsvTable table;
    table.source = path;
    std::string line;
    if (!std::getline(in, line)) throw input_error(path + ": empty file");
    table.header = detail::split_csv_line(line);
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        auto fields = detail::split_csv_line(line);
        if (fields.size() != table.header.size())
            throw input_error(table.row_label(table.rows.size()) + ": expected " +
                              std::to_string(table.header.size()) + " fields, got " +
                              std::to_string(fields.size()));
        table.rows.push_back(std::move(fields));
    }
    return table;
}

inline double parse_double(const std::string& s, const std::string& context) {
    double value = 0.0;
    const char* begin = s.data();
    const char* end = begin + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end)
        throw input_error(context + ": cannot parse number '" + s + "'");
    return value;
}

inline long parse_long(const std::string& s, const std::string& context) {
    long value = 0;
    const char* begin = s.data();
    const char* end = begin + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end)
        throw input_error(context + ": cannot parse integer '" + s + "'");
    return value;
}

inline bool parse_bool(const std::string& s, const std::string& context) {
    if (s == "1" || s == "true" || s == "TRUE" || s == "True") return true;
    if (s == "0" || s == "false" || s == "FALSE" || s == "False") return false;
    throw input_error(context + ": cannot parse boolean '" + s + "'");
}

inline void write_csv(const std::string& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path);
    if (!out) throw input_error("cannot write file: " + path);
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i) out << ',';
        out << header[i];
    }
    out << '\n';
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out << ',';
            out << row[i];
        }
        out << '\n';
    }
}

// Fixed, locale-independent numeric formatting used in every file we emit, so
// identical runs produce identical bytes.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

}  // namespace crisk
