#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace waveplan::csv {

inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

struct Row {
    std::size_t line_no = 0;  // 1-based, for diagnostics
    std::vector<std::string> fields;
};

/// Reads a whole CSV file. First row is returned as-is; header handling is the
/// caller's business. Empty lines are skipped.
inline std::vector<Row> read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open CSV file: " + path);
    std::vector<Row> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        rows.push_back({line_no, split_line(line)});
    }
    return rows;
}

inline long long parse_int(const std::string& s, std::size_t line_no, const char* what) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing garbage");
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("CSV line " + std::to_string(line_no) + ": bad " +
                                 std::string(what) + " value '" + s + "'");
    }
}

}  // namespace waveplan::csv
