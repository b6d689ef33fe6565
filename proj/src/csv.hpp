#pragma once

// Minimal strict delimiter-separated reader: header row, no quoting, no
// embedded delimiters. Internal to the library.

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "stresscast/errors.hpp"

namespace stresscast::detail {

inline std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(delim, start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().pop_back();
    return out;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::map<std::string, int> col_index;

    int column(const std::string& name) const {
        auto it = col_index.find(name);
        if (it == col_index.end()) throw DataError("missing mandatory column '" + name + "'");
        return it->second;
    }
};

inline CsvTable read_csv(const std::string& path, char delim) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file '" + path + "'");
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty file '" + path + "'");
    t.header = split_line(line, delim);
    for (std::size_t i = 0; i < t.header.size(); ++i)
        t.col_index.emplace(t.header[i], static_cast<int>(i));
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto fields = split_line(line, delim);
        if (fields.size() != t.header.size())
            throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(t.header.size()) + " fields, got " +
                            std::to_string(fields.size()));
        t.rows.push_back(std::move(fields));
    }
    return t;
}

inline double parse_double(const std::string& s, const std::string& context) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw DataError("unparseable numeric '" + s + "' in " + context);
    }
}

}  // namespace stresscast::detail
