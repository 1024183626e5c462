#include "disparity/csv.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "disparity/common.hpp"

namespace disparity {

int CsvTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return static_cast<int>(i);
    }
    return -1;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(field);
            field.clear();
        } else if (ch != '\r') {
            field.push_back(ch);
        }
    }
    out.push_back(field);
    // Trim surrounding spaces.
    for (auto& f : out) {
        std::size_t b = f.find_first_not_of(" \t");
        std::size_t e = f.find_last_not_of(" \t");
        f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
    }
    return out;
}

}  // namespace

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open file: " + path);
    CsvTable t;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        if (line[0] == '#') {
            if (t.header.empty()) t.comments.push_back(line);
            continue;
        }
        auto fields = split_line(line);
        if (t.header.empty()) {
            t.header = std::move(fields);
        } else {
            if (fields.size() != t.header.size()) {
                throw ValidationError(path + ":" + std::to_string(lineno) + ": expected " +
                                      std::to_string(t.header.size()) + " fields, got " +
                                      std::to_string(fields.size()));
            }
            t.rows.push_back(std::move(fields));
        }
    }
    if (t.header.empty()) throw ValidationError(path + ": empty file");
    return t;
}

void write_text_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ValidationError("cannot write file: " + tmp);
        out << content;
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw ValidationError("cannot rename " + tmp + " to " + path);
    }
}

void write_csv_atomic(const std::string& path, const CsvTable& table) {
    std::ostringstream os;
    for (const auto& c : table.comments) os << c << "\n";
    for (std::size_t i = 0; i < table.header.size(); ++i) {
        if (i) os << ',';
        os << table.header[i];
    }
    os << "\n";
    for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) os << ',';
            os << row[i];
        }
        os << "\n";
    }
    write_text_atomic(path, os.str());
}

std::string fmt_double(double v, int precision) {
    if (v == 0.0) v = 0.0;  // normalize -0
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    return buf;
}

std::string fmt_full(double v) {
    if (v == 0.0) v = 0.0;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace disparity
