#pragma once

#include <string>
#include <vector>

namespace disparity {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    // Leading lines starting with '#', kept verbatim.
    std::vector<std::string> comments;

    int column(const std::string& name) const;  // -1 if absent
};

CsvTable read_csv(const std::string& path);

// Writes via temp file + rename so partially written outputs never appear.
void write_text_atomic(const std::string& path, const std::string& content);

void write_csv_atomic(const std::string& path, const CsvTable& table);

// Stable numeric formatting used by every emitter.
std::string fmt_double(double v, int precision = 6);
std::string fmt_full(double v);  // round-trip precision (%.17g)

}  // namespace disparity
